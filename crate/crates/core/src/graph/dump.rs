use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{forward, GraphSpec, WeightStore};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Writes an 8-bit binary PGM (P5, maxval 255).
pub fn write_pgm(path: impl AsRef<Path>, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    if pixels.len() != width * height {
        return Err(Error::shape("pgm pixels", width * height, pixels.len()));
    }
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P5\n{width} {height}\n255\n")?;
    w.write_all(pixels)?;
    w.flush()?;
    Ok(())
}

fn normalize(plane: &[f32]) -> Vec<u8> {
    let (lo, hi) = plane.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    let range = f64::from(hi) - f64::from(lo);
    if !range.is_finite() || range <= 0.0 {
        return vec![0; plane.len()];
    }
    plane
        .iter()
        .map(|&v| {
            ((f64::from(v) - f64::from(lo)) / range * 255.0)
                .round()
                .clamp(0.0, 255.0) as u8
        })
        .collect()
}

/// Runs the graph and writes one PGM per channel of `layer` (sample 0) as
/// `{layer}_c{idx}.pgm`, each min-max normalized on its own.
pub fn dump_feature_maps(
    graph: &GraphSpec,
    weights: &WeightStore,
    x: &Tensor,
    layer: &str,
    dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>> {
    if graph.shape_of(layer).is_none() {
        return Err(Error::Invalid(format!("unknown layer `{layer}`")));
    }
    let out = forward(graph, weights, x)?;
    let t = out.get(layer).expect("known layer is evaluated");
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let s = t.shape();
    (0..s.c)
        .map(|c| {
            let path = dir.join(format!("{layer}_c{c}.pgm"));
            write_pgm(&path, s.w, s.h, &normalize(t.plane(0, c)))?;
            Ok(path)
        })
        .collect()
}
