//! Shared domain types.
//!
//! Timestamps are integer milliseconds since the Unix epoch and agent ids are
//! 64-bit integers, so time-bin arithmetic is exact.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type AgentId = i64;

/// Wraps an angle into the half-open interval `[-pi, pi)`.
pub fn normalize_angle(theta: f64) -> Result<f64> {
    if !theta.is_finite() {
        return Err(Error::InvalidAngle(theta));
    }
    if (-PI..PI).contains(&theta) {
        return Ok(theta);
    }
    let mut r = (theta + PI).rem_euclid(TAU) - PI;
    // rem_euclid may round up to exactly TAU
    if r >= PI {
        r -= TAU;
    }
    if r < -PI {
        r = -PI;
    }
    Ok(r)
}

/// Circular distance between two angles, in `[0, pi]`.
pub fn angle_difference(a: f64, b: f64) -> Result<f64> {
    Ok(normalize_angle(a - b)?.abs())
}

/// Orders a pair so that the smaller id comes first.
pub fn canonical_pair(a: AgentId, b: AgentId) -> Result<(AgentId, AgentId)> {
    if a == b {
        return Err(Error::InvalidPair(a));
    }
    Ok((a.min(b), a.max(b)))
}

/// One tracked pedestrian at one instant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub timestamp_ms: i64,
    pub agent_id: AgentId,
    pub x_mm: f64,
    pub y_mm: f64,
    pub velocity_mm_s: f64,
    pub motion_angle_rad: f64,
    pub face_angle_rad: f64,
}

impl TrajectoryPoint {
    /// Validates the kinematic fields and normalizes both angles.
    pub fn new(
        timestamp_ms: i64,
        agent_id: AgentId,
        x_mm: f64,
        y_mm: f64,
        velocity_mm_s: f64,
        motion_angle_rad: f64,
        face_angle_rad: f64,
    ) -> Result<Self> {
        if !x_mm.is_finite() || !y_mm.is_finite() {
            return Err(Error::invalid_input("position is not finite"));
        }
        if !(velocity_mm_s.is_finite() && velocity_mm_s >= 0.0) {
            return Err(Error::invalid_input(format!(
                "velocity {velocity_mm_s} must be finite and non-negative"
            )));
        }
        Ok(Self {
            timestamp_ms,
            agent_id,
            x_mm,
            y_mm,
            velocity_mm_s,
            motion_angle_rad: normalize_angle(motion_angle_rad)?,
            face_angle_rad: normalize_angle(face_angle_rad)?,
        })
    }

    pub fn position(&self) -> (f64, f64) {
        (self.x_mm, self.y_mm)
    }
}

/// A single pedestrian's points, strictly increasing in time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    agent_id: AgentId,
    points: Vec<TrajectoryPoint>,
}

impl Trajectory {
    pub fn new(agent_id: AgentId, points: Vec<TrajectoryPoint>) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| p.agent_id != agent_id) {
            return Err(Error::invalid_input(format!(
                "point of agent {} in trajectory of agent {agent_id}",
                p.agent_id
            )));
        }
        if let Some(w) = points.windows(2).find(|w| w[0].timestamp_ms >= w[1].timestamp_ms) {
            return Err(Error::invalid_input(format!(
                "agent {agent_id}: timestamps not strictly increasing at {}",
                w[1].timestamp_ms
            )));
        }
        Ok(Self { agent_id, points })
    }

    pub fn agent_id(&self) -> AgentId {
        self.agent_id
    }

    pub fn points(&self) -> &[TrajectoryPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first_timestamp(&self) -> Option<i64> {
        self.points.first().map(|p| p.timestamp_ms)
    }
}

/// One row of a group annotation file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupAnnotation {
    pub pedestrian_id: AgentId,
    pub group_size: usize,
    pub partner_ids: Vec<AgentId>,
    pub interacting_ids: Vec<AgentId>,
}

impl GroupAnnotation {
    pub fn new(
        pedestrian_id: AgentId,
        group_size: usize,
        partner_ids: Vec<AgentId>,
        interacting_ids: Vec<AgentId>,
    ) -> Result<Self> {
        if group_size < 2 {
            return Err(Error::invalid_input(format!(
                "group size {group_size} of pedestrian {pedestrian_id} is below 2"
            )));
        }
        if partner_ids.len() != group_size - 1 {
            return Err(Error::invalid_input(format!(
                "pedestrian {pedestrian_id}: group size {group_size} but {} partners",
                partner_ids.len()
            )));
        }
        if partner_ids.contains(&pedestrian_id) {
            return Err(Error::invalid_input(format!(
                "pedestrian {pedestrian_id} lists itself as a partner"
            )));
        }
        Ok(Self {
            pedestrian_id,
            group_size,
            partner_ids,
            interacting_ids,
        })
    }

    pub fn interacting_count(&self) -> usize {
        self.interacting_ids.len()
    }

    /// The annotated pedestrian followed by all partners.
    pub fn members(&self) -> impl Iterator<Item = AgentId> + '_ {
        std::iter::once(self.pedestrian_id).chain(self.partner_ids.iter().copied())
    }
}

/// Binary co-membership label for a canonically ordered pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PairLabel {
    pub agent_a: AgentId,
    pub agent_b: AgentId,
    pub label: u8,
}

impl PairLabel {
    pub fn new(a: AgentId, b: AgentId, label: u8) -> Result<Self> {
        let (agent_a, agent_b) = canonical_pair(a, b)?;
        if label > 1 {
            return Err(Error::invalid_input(format!("label {label} is not 0 or 1")));
        }
        Ok(Self {
            agent_a,
            agent_b,
            label,
        })
    }
}
