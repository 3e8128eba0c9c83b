//! Problem instances: leader, graph and per-follower data, plus the file
//! formats for scenarios, protocols and matrices.

mod csvmat;
mod files;

pub use csvmat::{read_csv_matrix, write_csv_matrix};
pub use files::{ProtocolFile, ScenarioError};

use nalgebra::dmatrix;

use crate::datamod::{TrajectoryData, TrueSystem};
use crate::error::{dim_err, Result};
use crate::leaderspec::LeaderSpec;
use crate::matcore::Matrix;
use crate::netgraph::CommGraph;

#[derive(Debug, Clone, PartialEq)]
pub struct FollowerSpec {
    pub c: Matrix,
    pub d: Matrix,
    pub data: TrajectoryData,
    /// Plant model for simulation and tests; never used for certification.
    pub true_model: Option<TrueSystem>,
}

impl FollowerSpec {
    pub fn new(c: Matrix, d: Matrix, data: TrajectoryData, true_model: Option<TrueSystem>) -> Result<Self> {
        let (n, m) = (data.state_dim(), data.input_dim());
        if c.ncols() != n || d.ncols() != m || c.nrows() != d.nrows() {
            return Err(dim_err(format!(
                "C {:?}, D {:?} do not fit data with n={n}, m={m}",
                c.shape(),
                d.shape()
            )));
        }
        if let Some(t) = &true_model {
            if t.a.nrows() != n
                || t.b.ncols() != m
                || t.e.ncols() != data.disturbance_dim()
                || t.c != c
                || t.d != d
            {
                return Err(dim_err("true model does not match the follower's data or output map"));
            }
        }
        Ok(Self { c, d, data, true_model })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub leader: LeaderSpec,
    pub graph: CommGraph,
    pub followers: Vec<FollowerSpec>,
}

impl Scenario {
    pub fn new(leader: LeaderSpec, graph: CommGraph, followers: Vec<FollowerSpec>) -> Result<Self> {
        if followers.len() != graph.n() {
            return Err(dim_err(format!(
                "{} followers for a graph with {} nodes",
                followers.len(),
                graph.n()
            )));
        }
        let p = leader.output_dim();
        for (i, f) in followers.iter().enumerate() {
            if f.c.nrows() != p {
                return Err(dim_err(format!(
                    "follower {}: output dimension {} differs from the leader's {p}",
                    i + 1,
                    f.c.nrows()
                )));
            }
        }
        Ok(Self { leader, graph, followers })
    }

    /// True models of all followers, if every follower carries one.
    pub fn true_models(&self) -> Option<Vec<TrueSystem>> {
        self.followers.iter().map(|f| f.true_model.clone()).collect()
    }
}

/// The nine-follower example: three plant types repeated over a ring with
/// chords 7→2 and 8→5, leader attached to followers 1 and 9.
pub fn example_scenario() -> Scenario {
    let leader = LeaderSpec::new(dmatrix![0.0, 1.0; 1.0, 0.0], dmatrix![1.0, 0.0], vec![1.0, 1.0])
        .expect("static leader");
    let followers = (0..9).map(|i| example_follower(i % 3)).collect();
    Scenario::new(leader, example_graph(), followers).expect("static scenario")
}

/// Follower of plant type 0, 1 or 2 with its recorded data.
pub fn example_follower(kind: usize) -> FollowerSpec {
    let b = dmatrix![1.0; 0.0];
    let u = dmatrix![1.0, 1.0, 1.0];
    let (a, c, d, x) = match kind {
        0 => (
            dmatrix![0.0, 1.0; 1.0, 1.0],
            dmatrix![1.0, 1.0],
            dmatrix![2.0],
            dmatrix![1.0, 0.0, 1.0, 1.0; -1.0, 0.0, 0.0, 1.0],
        ),
        1 => (
            dmatrix![0.0, 1.0; 1.0, -1.0],
            dmatrix![-1.0, 1.0],
            dmatrix![2.0],
            dmatrix![1.0, 0.0, 3.0, -1.0; -1.0, 2.0, -2.0, 5.0],
        ),
        _ => (
            dmatrix![0.0, -1.0; 1.0, 0.0],
            dmatrix![0.0, 1.0],
            dmatrix![0.5],
            dmatrix![1.0, 2.0, 0.0, -1.0; -1.0, 1.0, 2.0, 0.0],
        ),
    };
    let model = TrueSystem::new(a, b, Matrix::zeros(2, 0), c.clone(), d.clone()).expect("static model");
    let data = TrajectoryData::without_disturbance(u, x).expect("static data");
    FollowerSpec::new(c, d, data, Some(model)).expect("static follower")
}

pub fn example_graph() -> CommGraph {
    let mut edges = Vec::new();
    for i in 0..9 {
        let j = (i + 1) % 9;
        edges.push((i, j));
        edges.push((j, i));
    }
    edges.extend([(6, 1), (7, 4)]);
    let mut g = vec![0.0; 9];
    g[0] = 1.0;
    g[8] = 1.0;
    CommGraph::from_edges(9, &edges, g).expect("static graph")
}

/// Reference feedback gains for plant types 0, 1, 2.
pub fn reference_gains() -> [Matrix; 3] {
    [dmatrix![-0.3677, -1.3560], dmatrix![0.4183, -1.4385], dmatrix![0.0017, 1.0008]]
}

/// Reference regulator-equation solutions `M` for plant types 0, 1, 2.
pub fn reference_m() -> [Matrix; 3] {
    [
        dmatrix![0.0, 1.0; 2.0, -1.0; -1.0, 0.0],
        dmatrix![0.4, -1.4; 0.4, 0.6; 0.2, 0.8],
        dmatrix![0.6, -0.1; -0.3, 0.3; 0.7, -0.2],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamod::generate_data;

    #[test]
    fn stored_data_match_the_plants() {
        let s = example_scenario();
        for f in &s.followers {
            let t = f.true_model.as_ref().unwrap();
            let x0: Vec<f64> = f.data.x_full().column(0).iter().copied().collect();
            let regenerated = generate_data(&t.triple(), &x0, f.data.u_minus(), f.data.w_minus()).unwrap();
            assert_eq!(&regenerated, &f.data);
        }
    }

    #[test]
    fn scenario_shape_checks() {
        let s = example_scenario();
        assert!(Scenario::new(s.leader.clone(), s.graph.clone(), s.followers[..8].to_vec()).is_err());
        let mut bad = s.followers.clone();
        bad[3] = FollowerSpec {
            c: dmatrix![1.0, 0.0; 0.0, 1.0],
            d: dmatrix![0.0; 0.0],
            data: bad[3].data.clone(),
            true_model: None,
        };
        assert!(Scenario::new(s.leader.clone(), s.graph.clone(), bad).is_err());
        assert!(FollowerSpec::new(dmatrix![1.0], dmatrix![0.0], s.followers[0].data.clone(), None).is_err());
    }

    #[test]
    fn reference_m_solve_the_data_equations() {
        let s = example_scenario();
        for (kind, m) in reference_m().iter().enumerate() {
            let f = &s.followers[kind];
            let (xm, xp) = f.data.partition().unwrap();
            assert!((&xp * m - &xm * m * &s.leader.s).norm() <= 1e-12);
            assert!(((&f.c * &xm + &f.d * f.data.u_minus()) * m - &s.leader.r_out).norm() <= 1e-12);
        }
    }
}
