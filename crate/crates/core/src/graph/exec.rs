use super::{GraphSpec, Op, WeightStore, INPUT_NAME};
use crate::blocks::Block;
use crate::error::{Error, Result};
use crate::rng::SeedStream;
use crate::tensor::{add, concat_channels, upsample_nearest2x, Shape, Tensor};

#[allow(clippy::large_enum_variant)]
enum Step {
    Block(Block),
    Concat,
    Add,
    Upsample,
}

/// A graph with its blocks built from a weight store.
pub struct Network {
    graph: GraphSpec,
    steps: Vec<Step>,
}

/// Every intermediate of one forward pass, addressable by layer name.
#[derive(Clone, Debug)]
pub struct ForwardResult {
    names: Vec<String>,
    values: Vec<Tensor>,
    outputs: Vec<String>,
}

impl ForwardResult {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.values[i])
    }

    /// Declared outputs in declaration order.
    pub fn outputs(&self) -> Vec<(&str, &Tensor)> {
        self.outputs
            .iter()
            .map(|n| (n.as_str(), self.get(n).expect("declared outputs are evaluated")))
            .collect()
    }

    /// The first declared output.
    pub fn output(&self) -> &Tensor {
        self.get(&self.outputs[0]).expect("declared outputs are evaluated")
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn into_tensor(mut self, name: &str) -> Option<Tensor> {
        let i = self.names.iter().position(|n| n == name)?;
        Some(self.values.swap_remove(i))
    }
}

impl Network {
    pub fn build(graph: &GraphSpec, weights: &WeightStore) -> Result<Self> {
        let mut src = weights;
        let steps = graph
            .layers()
            .iter()
            .zip(graph.resolved())
            .map(|(spec, r)| {
                Ok(match &r.op {
                    Op::Block(cfg) => Step::Block(cfg.build(&spec.name, &mut src)?),
                    Op::Concat => Step::Concat,
                    Op::Add => Step::Add,
                    Op::UpsampleNearest2x => Step::Upsample,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            graph: graph.clone(),
            steps,
        })
    }

    pub fn graph(&self) -> &GraphSpec {
        &self.graph
    }

    pub fn forward(&self, x: &Tensor) -> Result<ForwardResult> {
        let input = self.graph.input_shape();
        if x.shape() != input {
            return Err(Error::shape("graph input", input, x.shape()));
        }
        let layers = self.graph.layers();
        let mut names = Vec::with_capacity(layers.len() + 1);
        let mut values: Vec<Tensor> = Vec::with_capacity(layers.len() + 1);
        names.push(INPUT_NAME.to_string());
        values.push(x.clone());
        for (spec, step) in layers.iter().zip(&self.steps) {
            let args: Vec<&Tensor> = spec
                .inputs
                .iter()
                .map(|i| {
                    &values[names
                        .iter()
                        .position(|n| n == i)
                        .expect("inputs resolved at parse time")]
                })
                .collect();
            let y = match step {
                Step::Block(b) => b.forward(args[0]),
                Step::Concat => concat_channels(&args),
                Step::Add => add(args[0], args[1]),
                Step::Upsample => Ok(upsample_nearest2x(args[0])),
            }
            .map_err(|e| Error::Validation {
                layer: spec.name.clone(),
                reason: e.to_string(),
            })?;
            names.push(spec.name.clone());
            values.push(y);
        }
        Ok(ForwardResult {
            names,
            values,
            outputs: self.graph.outputs().to_vec(),
        })
    }
}

/// Builds the network and runs one forward pass.
pub fn forward(graph: &GraphSpec, weights: &WeightStore, x: &Tensor) -> Result<ForwardResult> {
    Network::build(graph, weights)?.forward(x)
}

/// Input tensor drawn uniformly from [-1, 1) on the `input` stream of `seed`.
pub fn random_input(shape: Shape, seed: u64) -> Tensor {
    Tensor::random_uniform(shape, -1.0, 1.0, &mut SeedStream::new(seed).rng("input"))
}
