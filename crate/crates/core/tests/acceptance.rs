//! Acceptance criteria, one line each.
//!
//! Criteria 1-10 are evaluated through the check suites; each line sums the
//! time of the properties it is made of. Criterion 11 runs the toy slim-neck
//! spec on several thread pools and compares against the committed golden.

use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use slimneck::check::{run_suite, CheckOptions, Property, Suite};
use slimneck::graph::{forward, init_weights, parse_spec, random_input};

struct Criterion {
    id: usize,
    title: &'static str,
    /// Property keys, or a `suite.` prefix meaning every property whose key
    /// starts with it.
    keys: &'static [&'static str],
    budget: Duration,
}

const fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

const CRITERIA: [Criterion; 10] = [
    Criterion {
        id: 1,
        title: "DSC/SC ratio 0.17361 and ratio_p == ratio_c",
        keys: &["cost.dsc_ratio_appendix", "cost.dsc_ratio_exact_random"],
        budget: secs(1),
    },
    Criterion {
        id: 2,
        title: "SPPF efficiency 277.78% (analytic and counted)",
        keys: &["cost.sppf_efficiency_analytic", "cost.sppf_efficiency_counted"],
        budget: secs(5),
    },
    Criterion {
        id: 3,
        title: "SPP == SPPF bit-exact",
        keys: &["sppf.spp_equals_sppf"],
        budget: secs(30),
    },
    Criterion {
        id: 4,
        title: "GSConv/SC flops ratio in [0.58, 0.70]",
        keys: &["cost.gsconv_cost_band"],
        budget: secs(1),
    },
    Criterion {
        id: 5,
        title: "VoV-GSCSP flops below CSP",
        keys: &["cost.vov_gscsp_below_csp"],
        budget: secs(1),
    },
    Criterion {
        id: 6,
        title: "worked pair losses and rasterized IoU",
        keys: &["losses.worked_pair", "losses.rasterized_iou"],
        budget: secs(20),
    },
    Criterion {
        id: 7,
        title: "CIoU degenerates to DIoU; dv/dw = -(h/w) dv/dh",
        keys: &["losses.ciou_degenerates_to_diou", "losses.v_grad_ratio_relation"],
        budget: secs(5),
    },
    Criterion {
        id: 8,
        title: "loss and activation gradients vs finite differences",
        keys: &[
            "losses.loss_grad_finite_difference",
            "activations.derivative_finite_difference",
        ],
        budget: secs(10),
    },
    Criterion {
        id: 9,
        title: "im2col == naive bit-exact and faster",
        keys: &["conv.im2col_bit_identical", "conv.im2col_faster_than_naive"],
        budget: secs(60),
    },
    Criterion {
        id: 10,
        title: "blocks equal primitive compositions; shuffle invariants",
        keys: &["blocks.composition_oracle.", "shuffle."],
        budget: secs(30),
    },
];

/// Criteria that cannot hold as stated, with the reason. They are still
/// evaluated and reported; the test requires them to keep failing so a
/// change in behaviour is noticed.
const KNOWN_UNATTAINABLE: &[(usize, &str)] = &[(
    4,
    "GSConv/SC ratio is 1/2 + 25/(2C) for k=1, k_dw=5; outside [0.58, 0.70] at C = 32, 192, 256",
)];

struct Outcome {
    id: usize,
    passed: bool,
    line: String,
    /// Per-property lines printed under the criterion.
    details: String,
}

fn matches(key: &str, pattern: &str) -> bool {
    if pattern.ends_with('.') {
        key.starts_with(pattern)
    } else {
        key == pattern
    }
}

fn evaluate(c: &Criterion, props: &[Property]) -> Outcome {
    let selected: Vec<&Property> = props
        .iter()
        .filter(|p| c.keys.iter().any(|k| matches(&p.key, k)))
        .collect();
    let elapsed: Duration = selected.iter().map(|p| p.elapsed).sum();
    let failing: Vec<&str> = selected.iter().filter(|p| !p.passed).map(|p| p.key.as_str()).collect();
    let in_budget = elapsed < c.budget;
    let passed = !selected.is_empty() && failing.is_empty() && in_budget;
    let mut detail = format!(
        "{} properties, {:.3} s (budget {} s)",
        selected.len(),
        elapsed.as_secs_f64(),
        c.budget.as_secs()
    );
    if !failing.is_empty() {
        detail.push_str(&format!("; failing: {}", failing.join(", ")));
    }
    if !in_budget {
        detail.push_str("; over budget");
    }
    Outcome {
        id: c.id,
        passed,
        line: format!("{:<2} {}: {detail}", c.id, c.title),
        details: selected.iter().map(|p| format!("\n      {p}")).collect(),
    }
}

fn golden() -> Vec<(String, String, String)> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/slimneck_v5_toy.sha256");
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split_whitespace().collect();
            (f[0].to_string(), f[1].to_string(), f[2].to_string())
        })
        .collect()
}

fn determinism() -> Outcome {
    let t = Instant::now();
    let spec = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("specs/slimneck_v5_toy.spec");
    let graph = parse_spec(&fs::read_to_string(spec).unwrap()).unwrap();
    let expect = golden();
    let mut runs = 0;
    let mut mismatches = Vec::new();
    for threads in [1, 2, 4] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        for _ in 0..3 {
            let got = pool.install(|| {
                let weights = init_weights(&graph, 0);
                let x = random_input(graph.input_shape(), 0);
                forward(&graph, &weights, &x).unwrap()
            });
            runs += 1;
            for (name, shape, sum) in &expect {
                let out = got.get(name).unwrap();
                if &out.shape().to_string() != shape || &out.checksum() != sum {
                    mismatches.push(format!("{name}@{threads}t"));
                }
            }
        }
    }
    let elapsed = t.elapsed();
    let passed = mismatches.is_empty() && !expect.is_empty() && elapsed < secs(10);
    let mut detail = format!(
        "{runs} runs on 1/2/4-thread pools, {} outputs vs golden, {:.3} s (budget 10 s)",
        expect.len(),
        elapsed.as_secs_f64()
    );
    if !mismatches.is_empty() {
        detail.push_str(&format!("; mismatched: {}", mismatches.join(", ")));
    }
    Outcome {
        id: 11,
        passed,
        line: format!("11 toy slim-neck golden checksum, deterministic: {detail}"),
        details: String::new(),
    }
}

#[test]
fn acceptance_criteria() {
    let opts = CheckOptions::default();
    let mut props: HashMap<Suite, Vec<Property>> = HashMap::new();
    for suite in [
        Suite::Cost,
        Suite::Sppf,
        Suite::Losses,
        Suite::Activations,
        Suite::Conv,
        Suite::Blocks,
        Suite::Shuffle,
    ] {
        props.insert(suite, run_suite(suite, &opts));
    }
    let all: Vec<Property> = props.into_values().flatten().collect();
    let mut outcomes: Vec<Outcome> = CRITERIA.iter().map(|c| evaluate(c, &all)).collect();
    outcomes.push(determinism());

    let mut unexpected = Vec::new();
    for o in &outcomes {
        let known = KNOWN_UNATTAINABLE.iter().find(|(id, _)| *id == o.id);
        let tag = if o.passed { "PASS" } else { "FAIL" };
        match known {
            Some((_, why)) => println!("[{tag}] {} (known unattainable: {why})", o.line),
            None => println!("[{tag}] {}", o.line),
        }
        if !o.details.is_empty() {
            println!("{}", o.details.trim_start_matches('\n'));
        }
        if o.passed == known.is_some() {
            unexpected.push(o.id);
        }
    }
    let passed = outcomes.iter().filter(|o| o.passed).count();
    println!("{passed}/{} criteria pass", outcomes.len());
    assert!(
        unexpected.is_empty(),
        "criteria with unexpected outcome: {unexpected:?}"
    );
}
