//! Stratified node draws, the cubature error functional, and the moment
//! `B_N = {E |E_{x,ω}(f)|^p}^{1/p}` for a fixed function.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functions::TestFunction;
use crate::partition::Partition;
use crate::rng::{tag, StreamRng};
use crate::space::Point;
use crate::stats::moment_root;

/// One uniform node per cell; `nodes[j]` lies in cell `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDraw {
    pub n: usize,
    pub seed: u64,
    /// Draw counter within the seed's stream family.
    pub index: u64,
    pub nodes: Vec<Point>,
}

/// Node `j` of draw `k` comes from the stream keyed by `(seed, k, j)`.
pub fn draw_nodes_indexed(partition: &Partition, seed: u64, index: u64) -> NodeDraw {
    let nodes = partition
        .cells
        .iter()
        .enumerate()
        .map(|(j, c)| c.sample(&mut StreamRng::keyed(seed, &[tag::NODES, index, j as u64])))
        .collect();
    NodeDraw {
        n: partition.len(),
        seed,
        index,
        nodes,
    }
}

pub fn draw_nodes(partition: &Partition, seed: u64) -> NodeDraw {
    draw_nodes_indexed(partition, seed, 0)
}

/// `Σ_j ω_j f(x_j) - ∫_M f`.
pub fn cubature_error(f: &TestFunction, draw: &NodeDraw, partition: &Partition) -> Result<f64> {
    let exact = f.exact_integral(&partition.space)?;
    check_draw(draw, partition)?;
    Ok(error_with_integral(f, exact, draw, partition))
}

pub(crate) fn check_draw(draw: &NodeDraw, partition: &Partition) -> Result<()> {
    if draw.nodes.len() != partition.len() {
        return Err(Error::InvalidArgument(format!(
            "draw has {} nodes for {} cells",
            draw.nodes.len(),
            partition.len()
        )));
    }
    Ok(())
}

fn error_with_integral(f: &TestFunction, exact: f64, draw: &NodeDraw, partition: &Partition) -> f64 {
    let space = &partition.space;
    let sum: f64 = partition
        .cells
        .iter()
        .zip(&draw.nodes)
        .map(|(c, x)| c.measure * f.eval_in_cell(space, x, c.id))
        .sum();
    sum - exact
}

/// Cubature errors of `n_draws` independent draws, in draw order.
pub fn draw_errors(f: &TestFunction, partition: &Partition, n_draws: usize, seed: u64) -> Result<Vec<f64>> {
    let exact = f.exact_integral(&partition.space)?;
    Ok((0..n_draws as u64)
        .into_par_iter()
        .map(|k| error_with_integral(f, exact, &draw_nodes_indexed(partition, seed, k), partition))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub p: f64,
    pub n_draws: usize,
    pub moment_estimate: f64,
    pub standard_error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<f64>>,
}

/// `{(1/K) Σ_k |E(f; draw_k)|^p}^{1/p}` with a jackknife standard error.
pub fn estimate_bn(f: &TestFunction, partition: &Partition, p: f64, n_draws: usize, seed: u64) -> Result<ErrorStats> {
    if p < 1.0 || n_draws < 2 {
        return Err(Error::InvalidArgument(format!("need p >= 1 and n_draws >= 2 (p = {p}, n_draws = {n_draws})")));
    }
    let errs = draw_errors(f, partition, n_draws, seed)?;
    let est = moment_root(&errs, p);
    Ok(ErrorStats {
        p,
        n_draws,
        moment_estimate: est.value,
        standard_error: est.se,
        samples: Some(errs),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::besov::SetDescriptor;
    use crate::partition::torus_grid_partition;
    use crate::space::SpaceDescriptor;
    use crate::stats::mean_se;

    fn t1() -> SpaceDescriptor {
        SpaceDescriptor::torus(1).unwrap()
    }

    #[test]
    fn draw_examples() {
        let p = torus_grid_partition(&t1(), 4).unwrap();
        let d = draw_nodes(&p, 7);
        assert_eq!(d.nodes.len(), 4);
        for (j, x) in d.nodes.iter().enumerate() {
            assert!(j as f64 / 4.0 <= x.x(0) && x.x(0) < (j + 1) as f64 / 4.0);
        }
        assert_eq!(d, draw_nodes(&p, 7));
        assert_ne!(d.nodes, draw_nodes(&p, 8).nodes);
        let xs: Vec<f64> = (1..=1000).map(|s| draw_nodes(&p, s).nodes[0].x(0)).collect();
        let m = mean_se(&xs);
        assert!((m.value - 0.125).abs() < 3.0 * m.se);
    }

    #[test]
    fn error_examples() {
        let s = t1();
        let p = torus_grid_partition(&s, 2).unwrap();
        let one = TestFunction::constant(1.0);
        assert_eq!(cubature_error(&one, &draw_nodes(&p, 3), &p).unwrap(), 0.0);
        let ind = TestFunction::indicator(SetDescriptor::arc(0.0, 0.3));
        let draw = NodeDraw {
            n: 2,
            seed: 0,
            index: 0,
            nodes: vec![Point::torus(&[0.25]), Point::torus(&[0.75])],
        };
        assert!((cubature_error(&ind, &draw, &p).unwrap() - 0.2).abs() < 1e-15);
        let lin = TestFunction::Coordinate { axis: 0 };
        let p8 = torus_grid_partition(&s, 8).unwrap();
        let mids = NodeDraw {
            n: 8,
            seed: 0,
            index: 0,
            nodes: p8.cells.iter().map(|c| c.anchor).collect(),
        };
        assert!(cubature_error(&lin, &mids, &p8).unwrap().abs() < 1e-15);
    }

    #[test]
    fn linearity() {
        let s = t1();
        let p = torus_grid_partition(&s, 16).unwrap();
        let f = TestFunction::Cosine { freq: vec![3] };
        let g = TestFunction::indicator(SetDescriptor::arc(0.1, 0.35));
        let h = TestFunction::Combination {
            terms: vec![(2.0, f.clone()), (-0.5, g.clone())],
        };
        for seed in 0..20 {
            let d = draw_nodes(&p, seed);
            let lhs = cubature_error(&h, &d, &p).unwrap();
            let rhs = 2.0 * cubature_error(&f, &d, &p).unwrap() - 0.5 * cubature_error(&g, &d, &p).unwrap();
            assert!((lhs - rhs).abs() < 1e-14);
        }
    }

    #[test]
    fn bn_examples() {
        let s = t1();
        let p4 = torus_grid_partition(&s, 4).unwrap();
        for p in [1.0, 2.0, 3.5] {
            let e = estimate_bn(&TestFunction::constant(2.0), &p4, p, 10, 1).unwrap();
            assert!(e.moment_estimate.abs() < 1e-15);
        }
        // Σ_j ω_j^2 w^2/12 = N^{-3}/12
        let e = estimate_bn(&TestFunction::Coordinate { axis: 0 }, &p4, 2.0, 20_000, 2).unwrap();
        let exact = 12f64.powf(-0.5) * 4f64.powf(-1.5);
        assert!((exact - 0.036_084).abs() < 1e-6);
        assert!((e.moment_estimate - exact).abs() < 3.0 * e.standard_error, "{} {exact}", e.moment_estimate);
        let ind = TestFunction::indicator(SetDescriptor::arc(0.0, 0.5));
        let e = estimate_bn(&ind, &p4, 2.0, 100, 3).unwrap();
        assert_eq!(e.moment_estimate, 0.0);
        assert!(estimate_bn(&ind, &p4, 0.5, 100, 3).is_err());
        assert!(estimate_bn(&ind, &p4, 2.0, 1, 3).is_err());
    }

    #[test]
    fn moments_are_ordered_and_se_shrinks() {
        let s = t1();
        let p = torus_grid_partition(&s, 32).unwrap();
        let f = TestFunction::indicator(SetDescriptor::arc(0.13, 0.61));
        let e1 = estimate_bn(&f, &p, 1.0, 4000, 5).unwrap();
        let e2 = estimate_bn(&f, &p, 2.0, 4000, 5).unwrap();
        let e4 = estimate_bn(&f, &p, 4.0, 4000, 5).unwrap();
        assert!(e1.moment_estimate <= e2.moment_estimate && e2.moment_estimate <= e4.moment_estimate);
        let small = estimate_bn(&f, &p, 2.0, 2000, 6).unwrap();
        let big = estimate_bn(&f, &p, 2.0, 8000, 6).unwrap();
        let ratio = small.standard_error / big.standard_error;
        assert!((ratio - 2.0).abs() < 0.4, "{ratio}");
    }
}
