use std::collections::HashSet;

use super::{Attrs, GraphSpec, LayerKind, LayerSpec, INPUT_NAME};
use crate::error::{Error, Result};
use crate::tensor::Shape;

fn perr(line: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        line,
        reason: reason.into(),
    }
}

fn valid_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

/// Parses and validates a `.spec` document.
pub fn parse_spec(text: &str) -> Result<GraphSpec> {
    let mut input: Option<Shape> = None;
    let mut layers: Vec<LayerSpec> = Vec::new();
    let mut outputs: Option<Vec<String>> = None;
    let mut known: HashSet<String> = HashSet::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let keyword = tokens.next().expect("non-empty line has a token");
        match keyword {
            "input" => {
                if input.is_some() {
                    return Err(perr(line_no, "duplicate input declaration"));
                }
                if !layers.is_empty() {
                    return Err(perr(line_no, "input must be declared before any layer"));
                }
                let dims = tokens
                    .map(|t| {
                        t.parse::<usize>()
                            .map_err(|_| perr(line_no, format!("bad input dimension `{t}`")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                if dims.len() != 4 || dims.contains(&0) {
                    return Err(perr(line_no, "input expects four positive dimensions: n c h w"));
                }
                input = Some(Shape::new(dims[0], dims[1], dims[2], dims[3]));
                known.insert(INPUT_NAME.to_string());
            }
            "layer" => {
                if input.is_none() {
                    return Err(perr(line_no, "layer declared before input"));
                }
                if outputs.is_some() {
                    return Err(perr(line_no, "layer declared after output"));
                }
                let kind_tok = tokens.next().ok_or_else(|| perr(line_no, "layer kind missing"))?;
                let kind: LayerKind = kind_tok.parse().map_err(|e: Error| perr(line_no, e.to_string()))?;
                let mut name = None;
                let mut inputs = None;
                let mut attrs = Attrs::default();
                let mut seen = HashSet::new();
                for tok in tokens {
                    let (key, value) = tok
                        .split_once('=')
                        .ok_or_else(|| perr(line_no, format!("expected key=value, got `{tok}`")))?;
                    if !seen.insert(key) {
                        return Err(perr(line_no, format!("attribute `{key}` given twice")));
                    }
                    match key {
                        "name" => name = Some(value.to_string()),
                        "in" => inputs = Some(value.split(',').map(str::to_string).collect::<Vec<_>>()),
                        _ => {
                            if !kind.allowed_attrs().contains(&key) {
                                return Err(perr(line_no, format!("`{kind}` does not accept attribute `{key}`")));
                            }
                            attrs.set(key, value).map_err(|e| perr(line_no, e.to_string()))?;
                        }
                    }
                }
                let name = name.ok_or_else(|| perr(line_no, "layer name missing (name=...)"))?;
                if !valid_name(&name) {
                    return Err(perr(line_no, format!("invalid layer name `{name}`")));
                }
                if known.contains(&name) {
                    return Err(perr(line_no, format!("duplicate layer name `{name}`")));
                }
                let inputs = inputs.ok_or_else(|| perr(line_no, format!("layer `{name}` has no inputs (in=...)")))?;
                for i in &inputs {
                    if !known.contains(i) {
                        return Err(perr(
                            line_no,
                            format!("layer `{name}` references undeclared layer `{i}`"),
                        ));
                    }
                }
                known.insert(name.clone());
                layers.push(LayerSpec {
                    name,
                    kind,
                    inputs,
                    attrs,
                });
            }
            "output" => {
                if outputs.is_some() {
                    return Err(perr(line_no, "duplicate output declaration"));
                }
                let names: Vec<String> = tokens.map(str::to_string).collect();
                if names.is_empty() {
                    return Err(perr(line_no, "output lists no layers"));
                }
                for n in &names {
                    if !known.contains(n) {
                        return Err(perr(line_no, format!("output references undeclared layer `{n}`")));
                    }
                }
                outputs = Some(names);
            }
            other => return Err(perr(line_no, format!("unknown directive `{other}`"))),
        }
    }
    let input = input.ok_or_else(|| perr(1, "missing input declaration"))?;
    let outputs = outputs.ok_or_else(|| perr(text.lines().count().max(1), "missing output declaration"))?;
    GraphSpec::new(input, layers, outputs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_conv() {
        let g = parse_spec("input 1 3 64 64\nlayer conv name=c1 in=input out_c=8 k=3 s=1\noutput c1").unwrap();
        assert_eq!(g.layers().len(), 1);
        assert_eq!(g.shape_of("c1"), Some(Shape::new(1, 8, 64, 64)));
    }

    #[test]
    fn comments_and_blank_lines() {
        let g =
            parse_spec("# header\n\ninput 1 3 8 8   # shape\nlayer sppf name=p in=input # pool\noutput p\n").unwrap();
        assert_eq!(g.shape_of("p"), Some(Shape::new(1, 12, 8, 8)));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let cases = [
            (
                "input 1 3 8 8\nlayer conv name=c in=nope out_c=4\noutput c\n",
                2,
                "nope",
            ),
            ("input 1 3 8 8\nlayer warp name=c in=input\noutput c\n", 2, "warp"),
            (
                "input 1 3 8 8\nlayer conv name=c in=input out_c=4\nlayer conv name=c in=input out_c=4\noutput c\n",
                3,
                "duplicate",
            ),
            (
                "input 1 3 8 8\nlayer conv name=c in=input out_c=four\noutput c\n",
                2,
                "out_c",
            ),
            (
                "input 1 3 8 8\nlayer conv name=c in=d out_c=4\nlayer conv name=d in=input out_c=4\noutput c\n",
                2,
                "`d`",
            ),
            ("input 1 3 8\noutput input\n", 1, "four"),
            ("layer conv name=c in=input out_c=4\n", 1, "before input"),
            (
                "input 1 3 8 8\nlayer conv name=c in=input out_c=4 act=gelu\noutput c\n",
                2,
                "gelu",
            ),
            (
                "input 1 3 8 8\nlayer conv name=c in=input out_c=4\noutput d\n",
                3,
                "`d`",
            ),
        ];
        for (text, line, needle) in cases {
            match parse_spec(text) {
                Err(Error::Parse { line: l, reason }) => {
                    assert_eq!(l, line, "{text}");
                    assert!(reason.contains(needle), "{reason} lacks {needle}");
                }
                other => panic!("expected parse error for {text:?}, got {other:?}"),
            }
        }
    }

    #[test]
    fn canonical_round_trip() {
        let text = "input 2 8 16 16\n\
            layer conv name=c in=input out_c=16 k=3 s=2 act=none\n\
            layer gsconv name=g in=c out_c=16 k=3 k_dw=3 act=mish\n\
            layer concat name=cat in=c,g\n\
            layer cbam name=att in=cat r=8\n\
            layer upsample_nearest2x name=up in=att\n\
            output up g\n";
        let g = parse_spec(text).unwrap();
        let canon = g.serialize();
        let again = parse_spec(&canon).unwrap();
        assert_eq!(again, g);
        assert_eq!(again.serialize(), canon);
    }
}
