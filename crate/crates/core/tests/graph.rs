use std::fs;
use std::path::PathBuf;

use slimneck::check::Oracle;
use slimneck::cost::{cost_sc, graph_cost};
use slimneck::graph::{
    dump_feature_maps, forward, init_weights, load_weights, parse_spec, random_input, save_weights, GraphSpec, Op,
    INPUT_NAME,
};
use slimneck::{Shape, Tensor};

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn spec(name: &str) -> GraphSpec {
    parse_spec(&fs::read_to_string(root().join("specs").join(name)).unwrap()).unwrap()
}

const SPECS: [&str; 3] = ["slimneck_v5_toy.spec", "csp_v5_toy.spec", "identity.spec"];

#[test]
fn toy_cost_matches_golden_csv() {
    let golden = fs::read_to_string(root().join("tests/golden/slimneck_v5_toy.csv")).unwrap();
    let report = graph_cost(&spec("slimneck_v5_toy.spec")).unwrap();
    assert_eq!(report.to_csv(), golden);
    let rows: Vec<Vec<&str>> = golden.lines().skip(1).map(|l| l.split(',').collect()).collect();
    let params: u64 = rows.iter().map(|r| r[4].parse::<u64>().unwrap()).sum();
    let flops: u64 = rows.iter().map(|r| r[5].parse::<u64>().unwrap()).sum();
    assert_eq!((params, flops), (report.total_params(), report.total_flops()));
}

#[test]
fn slim_neck_is_cheaper_than_its_csp_twin() {
    let mut slim = graph_cost(&spec("slimneck_v5_toy.spec")).unwrap();
    slim.compare_against(&graph_cost(&spec("csp_v5_toy.spec")).unwrap());
    let c = slim.comparison.unwrap();
    assert!(c.flops_delta() < 0 && c.params_delta() < 0);
}

#[test]
fn single_conv_graph_matches_sc() {
    let g = parse_spec("input 1 3 64 64\nlayer conv name=c1 in=input out_c=8 k=3 s=1\noutput c1").unwrap();
    assert_eq!(g.shape_of("c1"), Some(Shape::new(1, 8, 64, 64)));
    let r = graph_cost(&g).unwrap();
    let sc = cost_sc(3, 8, 3, 64, 64);
    assert_eq!((r.total_params(), r.total_flops()), (sc.params, sc.flops));
}

#[test]
fn propagated_shapes_agree_with_forward() {
    for name in SPECS {
        let g = spec(name);
        let report = graph_cost(&g).unwrap();
        let out = forward(&g, &init_weights(&g, 1), &random_input(g.input_shape(), 1)).unwrap();
        for row in &report.layers {
            let s = out.get(&row.name).unwrap().shape();
            assert_eq!((s.c, s.h, s.w), row.out_shape, "{name}: {}", row.name);
        }
    }
}

#[test]
fn specs_reserialize_to_a_fixed_point() {
    for name in SPECS {
        let text = spec(name).serialize();
        assert_eq!(parse_spec(&text).unwrap().serialize(), text, "{name}");
    }
}

/// Every block layer of the toy network, re-evaluated from primitives on the
/// same weights and the same input, matches the graph executor bit for bit.
#[test]
fn toy_forward_matches_primitive_oracle() {
    let g = spec("slimneck_v5_toy.spec");
    let weights = init_weights(&g, 0);
    let x = random_input(g.input_shape(), 0);
    let out = forward(&g, &weights, &x).unwrap();
    let oracle = Oracle::new(weights.iter().map(|(k, v)| (k.to_string(), v.clone())));
    let mut checked = 0;
    for (layer, resolved) in g.layers().iter().zip(g.resolved()) {
        if let Op::Block(cfg) = &resolved.op {
            let input = match layer.inputs[0].as_str() {
                INPUT_NAME => &x,
                other => out.get(other).unwrap(),
            };
            let want = oracle.forward(cfg, &layer.name, input).unwrap();
            assert!(want.bit_eq(out.get(&layer.name).unwrap()), "{}", layer.name);
            checked += 1;
        }
    }
    assert_eq!(checked, 16);
}

#[test]
fn identity_graph_copies_input() {
    let g = spec("identity.spec");
    let mut w = init_weights(&g, 0);
    w.insert(
        "id.weight",
        Tensor::from_fn(Shape::new(4, 4, 1, 1), |o, i, _, _| f32::from(o == i)),
    );
    // var + eps == 1 makes the batch norm an exact identity
    w.insert("id.bn.var", Tensor::full(Shape::new(4, 1, 1, 1), 1.0 - 1e-5));
    let x = random_input(g.input_shape(), 3);
    assert!(forward(&g, &w, &x).unwrap().output().bit_eq(&x));
}

#[test]
fn weights_file_round_trip_is_byte_exact() {
    let dir = tempfile::tempdir().unwrap();
    let g = spec("slimneck_v5_toy.spec");
    let w = init_weights(&g, 5);
    let (a, b) = (dir.path().join("a.nwts"), dir.path().join("b.nwts"));
    save_weights(&w, &a).unwrap();
    let loaded = load_weights(&a).unwrap();
    save_weights(&loaded, &b).unwrap();
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    loaded.validate(&g).unwrap();
    assert!(loaded.validate(&spec("csp_v5_toy.spec")).is_err());
}

#[test]
fn feature_map_dump() {
    let dir = tempfile::tempdir().unwrap();
    let g = spec("slimneck_v5_toy.spec");
    let w = init_weights(&g, 0);
    let x = random_input(g.input_shape(), 0);
    let files = dump_feature_maps(&g, &w, &x, "lat4", dir.path()).unwrap();
    assert_eq!(files.len(), 32);
    assert_eq!(files[1].file_name().unwrap(), "lat4_c1.pgm");

    let t = forward(&g, &w, &x).unwrap().get("lat4").unwrap().clone();
    let plane = t.plane(0, 0);
    let (lo, hi) = plane
        .iter()
        .fold((f32::MAX, f32::MIN), |(l, h), &v| (l.min(v), h.max(v)));
    let bytes = fs::read(&files[0]).unwrap();
    let header = b"P5\n4 4\n255\n";
    assert_eq!(&bytes[..header.len()], header);
    let pixel = f32::from(bytes[header.len()]) / 255.0;
    assert!((pixel - (plane[0] - lo) / (hi - lo)).abs() <= 1.0 / 255.0);

    assert!(dump_feature_maps(&g, &w, &x, "nope", dir.path()).is_err());
}
