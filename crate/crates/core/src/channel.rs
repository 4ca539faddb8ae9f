//! Network topologies and random channel-gain realizations.
//!
//! Gains are power gains under a normalized model: unit noise variance and
//! unit gain at the reference distance, so a gain of `g` at transmit power
//! `p` gives received SNR `p * g`.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::matrix::SquareMatrix;
use crate::seed::rng_from_seed;

/// Minimum separation (km) accepted between any two linked endpoints.
pub const MIN_SEPARATION_KM: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Node and destination placement on a square area. User `i` transmits from
/// `node_positions[i]` to `destination_positions[i]`; destinations may
/// coincide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    node_positions: Vec<Point>,
    destination_positions: Vec<Point>,
    area_side: f64,
}

impl Topology {
    pub fn new(
        node_positions: Vec<Point>,
        destination_positions: Vec<Point>,
        area_side: f64,
    ) -> Result<Self> {
        let t = Self {
            node_positions,
            destination_positions,
            area_side,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.node_positions.len();
        if k == 0 {
            return Err(Error::InvalidTopology("at least one user is required".into()));
        }
        if self.destination_positions.len() != k {
            return Err(Error::InvalidTopology(format!(
                "{} nodes but {} destinations",
                k,
                self.destination_positions.len()
            )));
        }
        if !(self.area_side > 0.0 && self.area_side.is_finite()) {
            return Err(Error::InvalidTopology(format!(
                "area side must be positive, got {}",
                self.area_side
            )));
        }
        let inside = |p: &Point| {
            (0.0..=self.area_side).contains(&p.x) && (0.0..=self.area_side).contains(&p.y)
        };
        for (i, p) in self.node_positions.iter().chain(&self.destination_positions).enumerate() {
            if !inside(p) {
                return Err(Error::InvalidTopology(format!(
                    "point #{i} ({}, {}) lies outside the area",
                    p.x, p.y
                )));
            }
        }
        for i in 0..k {
            for j in 0..k {
                if i != j && self.internode_distance(i, j) < MIN_SEPARATION_KM {
                    return Err(Error::InvalidTopology(format!("nodes {i} and {j} coincide")));
                }
                if self.node_to_destination_distance(j, i) < MIN_SEPARATION_KM {
                    return Err(Error::InvalidTopology(format!(
                        "node {j} coincides with the destination of user {i}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn num_users(&self) -> usize {
        self.node_positions.len()
    }

    pub fn node_positions(&self) -> &[Point] {
        &self.node_positions
    }

    pub fn destination_positions(&self) -> &[Point] {
        &self.destination_positions
    }

    pub fn area_side(&self) -> f64 {
        self.area_side
    }

    pub fn internode_distance(&self, i: usize, j: usize) -> f64 {
        self.node_positions[i].distance(&self.node_positions[j])
    }

    /// Distance from node `j` to the destination of user `i`.
    pub fn node_to_destination_distance(&self, j: usize, i: usize) -> f64 {
        self.node_positions[j].distance(&self.destination_positions[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fading {
    /// Exponential power with unit mean (squared magnitude of a unit-variance
    /// circularly-symmetric complex Gaussian).
    RayleighUnitMean,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagationParams {
    pub path_loss_exponent: f64,
    pub shadowing_std_db: f64,
    pub reference_distance: f64,
    pub fading: Fading,
    /// Recorded for documentation; the normalized model does not use it.
    pub carrier_frequency_ghz: f64,
}

impl Default for PropagationParams {
    fn default() -> Self {
        Self {
            path_loss_exponent: 3.5,
            shadowing_std_db: 5.8,
            reference_distance: 1.0,
            fading: Fading::RayleighUnitMean,
            carrier_frequency_ghz: 5.0,
        }
    }
}

impl PropagationParams {
    /// Deterministic path loss only.
    pub fn path_loss_only() -> Self {
        Self {
            shadowing_std_db: 0.0,
            fading: Fading::None,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.path_loss_exponent > 0.0 && self.path_loss_exponent.is_finite()) {
            return Err(invalid("path_loss_exponent", "must be positive"));
        }
        if !(self.shadowing_std_db >= 0.0 && self.shadowing_std_db.is_finite()) {
            return Err(invalid("shadowing_std_db", "must be nonnegative"));
        }
        if !(self.reference_distance > 0.0 && self.reference_distance.is_finite()) {
            return Err(invalid("reference_distance", "must be positive"));
        }
        Ok(())
    }
}

/// One fading draw.
///
/// `internode_gain[(i, j)]` is the phase-1 link from source `i` to node `j`
/// (diagonal unused, zero). `node_to_dest_gain[(j, i)]` is the link from
/// node `j` to the destination of user `i`; its diagonal is each user's
/// direct link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    internode_gain: SquareMatrix,
    node_to_dest_gain: SquareMatrix,
}

impl ChannelRealization {
    pub fn new(internode_gain: SquareMatrix, node_to_dest_gain: SquareMatrix) -> Result<Self> {
        let k = internode_gain.dim();
        if node_to_dest_gain.dim() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: node_to_dest_gain.dim(),
            });
        }
        if k == 0 {
            return Err(Error::InvalidChannel("empty network".into()));
        }
        for (name, m) in [("internode", &internode_gain), ("node-to-destination", &node_to_dest_gain)] {
            if let Some((r, c, v)) = m.iter_entries().find(|&(_, _, v)| !(v >= 0.0 && v.is_finite())) {
                return Err(Error::InvalidChannel(format!(
                    "{name} gain ({r}, {c}) = {v} is not finite and nonnegative"
                )));
            }
        }
        if let Some(i) = (0..k).find(|&i| internode_gain[(i, i)] != 0.0) {
            return Err(Error::InvalidChannel(format!(
                "internode diagonal entry {i} must be zero"
            )));
        }
        Ok(Self {
            internode_gain,
            node_to_dest_gain,
        })
    }

    pub fn num_users(&self) -> usize {
        self.internode_gain.dim()
    }

    /// Source `i` to node `j`.
    #[inline]
    pub fn internode(&self, i: usize, j: usize) -> f64 {
        self.internode_gain[(i, j)]
    }

    /// Node `j` to the destination of user `i`.
    #[inline]
    pub fn node_to_dest(&self, j: usize, i: usize) -> f64 {
        self.node_to_dest_gain[(j, i)]
    }

    pub fn internode_gain(&self) -> &SquareMatrix {
        &self.internode_gain
    }

    pub fn node_to_dest_gain(&self) -> &SquareMatrix {
        &self.node_to_dest_gain
    }
}

/// `(d / d0)^(-alpha) * 10^(shadowing_db / 10) * fading_power`.
pub fn path_gain(
    distance: f64,
    params: &PropagationParams,
    shadowing_db: f64,
    fading_power: f64,
) -> Result<f64> {
    if !(distance > 0.0) || !distance.is_finite() {
        return Err(Error::Domain(format!(
            "distance must be positive and finite, got {distance}"
        )));
    }
    let loss = (distance / params.reference_distance).powf(-params.path_loss_exponent);
    Ok(loss * 10f64.powf(shadowing_db / 10.0) * fading_power)
}

/// Draws one channel realization.
///
/// Draw order: internode links row-major over `(i, j)` with `i != j`, then
/// node-to-destination links row-major over `(j, i)`. Each link consumes one
/// standard normal (shadowing, scaled by `shadowing_std_db`) followed by one
/// unit exponential (fading power). Both values are drawn even when the
/// corresponding effect is disabled, so the stream layout does not depend on
/// the parameters.
pub fn sample_realization(
    topology: &Topology,
    params: &PropagationParams,
    seed: u64,
) -> Result<ChannelRealization> {
    topology.validate()?;
    params.validate()?;
    let k = topology.num_users();
    let mut rng = rng_from_seed(seed);
    let mut draw = |distance: f64| -> Result<f64> {
        let z: f64 = rng.sample(StandardNormal);
        let e: f64 = rng.sample(Exp1);
        let fading = match params.fading {
            Fading::RayleighUnitMean => e,
            Fading::None => 1.0,
        };
        path_gain(distance, params, params.shadowing_std_db * z, fading)
    };

    let mut internode = SquareMatrix::zeros(k);
    for i in 0..k {
        for j in 0..k {
            if i != j {
                internode[(i, j)] = draw(topology.internode_distance(i, j))?;
            }
        }
    }
    let mut to_dest = SquareMatrix::zeros(k);
    for j in 0..k {
        for i in 0..k {
            to_dest[(j, i)] = draw(topology.node_to_destination_distance(j, i))?;
        }
    }
    ChannelRealization::new(internode, to_dest)
}

/// Four users on a 1 km square sharing a destination at the origin.
pub fn toy_topology() -> Topology {
    let nodes = vec![
        Point::new(0.2, 0.5),
        Point::new(0.4, 0.3),
        Point::new(0.5, 0.8),
        Point::new(0.8, 0.6),
    ];
    let dest = vec![Point::new(0.0, 0.0); nodes.len()];
    Topology::new(nodes, dest, 1.0).expect("toy topology is valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DestinationPlacement {
    /// All users share one destination.
    Shared(Point),
    /// Each user's destination is drawn uniformly on the area.
    PerUserUniform,
}

impl Default for DestinationPlacement {
    fn default() -> Self {
        Self::Shared(Point::new(0.0, 0.0))
    }
}

/// `k` nodes i.i.d. uniform on `[0, area_side)^2`.
///
/// Draw order: node coordinates `(x, y)` in user order, then (for per-user
/// destinations) destination coordinates in user order. A node that lands
/// within [`MIN_SEPARATION_KM`] of an earlier point is redrawn.
pub fn random_topology(
    k: usize,
    area_side: f64,
    placement: DestinationPlacement,
    seed: u64,
) -> Result<Topology> {
    if k == 0 {
        return Err(invalid("users", "at least one user is required"));
    }
    if !(area_side > 0.0 && area_side.is_finite()) {
        return Err(invalid("area_side", "must be positive"));
    }
    let mut rng = rng_from_seed(seed);
    let uniform_point = |rng: &mut rand_chacha::ChaCha8Rng| {
        Point::new(rng.random::<f64>() * area_side, rng.random::<f64>() * area_side)
    };

    let mut nodes: Vec<Point> = Vec::with_capacity(k);
    let shared = match placement {
        DestinationPlacement::Shared(p) => Some(p),
        DestinationPlacement::PerUserUniform => None,
    };
    while nodes.len() < k {
        let p = uniform_point(&mut rng);
        let clashes = nodes.iter().any(|q| q.distance(&p) < MIN_SEPARATION_KM)
            || shared.is_some_and(|d| d.distance(&p) < MIN_SEPARATION_KM);
        if !clashes {
            nodes.push(p);
        }
    }
    let destinations = match shared {
        Some(d) => vec![d; k],
        None => {
            let mut dests = Vec::with_capacity(k);
            while dests.len() < k {
                let d = uniform_point(&mut rng);
                if nodes.iter().all(|n| n.distance(&d) >= MIN_SEPARATION_KM) {
                    dests.push(d);
                }
            }
            dests
        }
    };
    Topology::new(nodes, destinations, area_side)
}
