//! Named coil assemblies, logical drive currents and compiled field evaluation.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};

use super::conductor::{Conductor, Segment};
use super::kernel::{distance_to_segment, ON_CONDUCTOR_TOLERANCE_MM};
use super::{FieldError, Mat3, Vec3, MU0_OVER_4PI};

pub const DEFAULT_SEGMENTS_PER_LOOP: usize = 720;
pub const MIN_SEGMENTS_PER_LOOP: usize = 16;
pub const DEFAULT_GRADIENT_STEP_MM: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub name: String,
    #[serde(flatten)]
    pub conductor: Conductor,
}

/// Two members driven in series by one logical current named `name`.
/// Member `a` carries the drive current, member `b` carries
/// `relative_sign` times it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairLink {
    pub name: String,
    pub a: String,
    pub b: String,
    pub relative_sign: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CoilAssembly {
    pub members: Vec<Member>,
    #[serde(default)]
    pub pair_links: Vec<PairLink>,
}

/// Logical drive currents in amperes. Logical currents not listed carry zero.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Drive(pub BTreeMap<String, f64>);

impl Drive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn single(name: &str, amps: f64) -> Self {
        Self::new().with(name, amps)
    }

    pub fn with(mut self, name: &str, amps: f64) -> Self {
        self.0.insert(name.to_string(), amps);
        self
    }

    pub fn set(&mut self, name: &str, amps: f64) {
        self.0.insert(name.to_string(), amps);
    }

    pub fn get(&self, name: &str) -> f64 {
        self.0.get(name).copied().unwrap_or(0.0)
    }
}

impl CoilAssembly {
    pub fn add(&mut self, name: &str, conductor: Conductor) -> &mut Self {
        self.members.push(Member { name: name.to_string(), conductor });
        self
    }

    pub fn link(&mut self, name: &str, a: &str, b: &str, relative_sign: f64) -> &mut Self {
        self.pair_links.push(PairLink { name: name.into(), a: a.into(), b: b.into(), relative_sign });
        self
    }

    pub fn member(&self, name: &str) -> Option<&Member> {
        self.members.iter().find(|m| m.name == name)
    }

    pub fn link_named(&self, name: &str) -> Option<&PairLink> {
        self.pair_links.iter().find(|l| l.name == name)
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        let mut names = HashSet::new();
        for m in &self.members {
            if !names.insert(m.name.as_str()) {
                return Err(FieldError::DuplicateName(m.name.clone()));
            }
            m.conductor.validate()?;
        }
        let mut linked = HashSet::new();
        for link in &self.pair_links {
            for member in [&link.a, &link.b] {
                if !names.contains(member.as_str()) {
                    return Err(FieldError::UnknownCoil(member.clone()));
                }
                if !linked.insert(member.as_str()) {
                    return Err(FieldError::InvalidGeometry(format!("member {member} appears in more than one pair link")));
                }
            }
            if link.a == link.b {
                return Err(FieldError::InvalidGeometry(format!("pair link {} joins {} to itself", link.name, link.a)));
            }
            if !link.relative_sign.is_finite() || link.relative_sign == 0.0 {
                return Err(FieldError::InvalidGeometry(format!("pair link {} needs a nonzero relative sign", link.name)));
            }
        }
        let mut logical = HashSet::new();
        for name in self.logical_currents() {
            if !logical.insert(name.clone()) {
                return Err(FieldError::DuplicateName(name));
            }
        }
        Ok(())
    }

    /// Names that a [`Drive`] may address: every pair link plus every member
    /// not covered by a link.
    pub fn logical_currents(&self) -> Vec<String> {
        let linked: HashSet<&str> =
            self.pair_links.iter().flat_map(|l| [l.a.as_str(), l.b.as_str()]).collect();
        self.pair_links
            .iter()
            .map(|l| l.name.clone())
            .chain(self.members.iter().filter(|m| !linked.contains(m.name.as_str())).map(|m| m.name.clone()))
            .collect()
    }

    pub fn compile(&self, segments_per_loop: usize) -> Result<CompiledAssembly, FieldError> {
        CompiledAssembly::new(self, segments_per_loop)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("assembly serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, FieldError> {
        let assembly: CoilAssembly =
            serde_json::from_str(text).map_err(|e| FieldError::InvalidGeometry(format!("assembly JSON: {e}")))?;
        assembly.validate()?;
        Ok(assembly)
    }
}

#[derive(Debug, Clone)]
struct PreparedSegment {
    start: Vec3,
    end: Vec3,
    weight: f64,
    len_sq: f64,
}

#[derive(Debug, Clone)]
struct CompiledMember {
    name: String,
    segments: Vec<PreparedSegment>,
}

#[derive(Debug, Clone)]
struct LogicalCurrent {
    name: String,
    terms: Vec<(usize, f64)>,
}

/// An assembly expanded into straight segments, ready for repeated
/// evaluation. Immutable and `Sync`.
#[derive(Debug, Clone)]
pub struct CompiledAssembly {
    members: Vec<CompiledMember>,
    logical: Vec<LogicalCurrent>,
    segments_per_loop: usize,
}

impl CompiledAssembly {
    pub fn new(assembly: &CoilAssembly, segments_per_loop: usize) -> Result<Self, FieldError> {
        if segments_per_loop < MIN_SEGMENTS_PER_LOOP {
            return Err(FieldError::InvalidParameter(format!(
                "segments_per_loop must be at least {MIN_SEGMENTS_PER_LOOP}, got {segments_per_loop}"
            )));
        }
        assembly.validate()?;
        let members: Vec<CompiledMember> = assembly
            .members
            .iter()
            .map(|m| CompiledMember {
                name: m.name.clone(),
                segments: m.conductor.segments(segments_per_loop, 1.0).into_iter().map(prepare).collect(),
            })
            .collect();
        let index = |name: &str| members.iter().position(|m| m.name == name).expect("validated");
        let linked: HashSet<&str> =
            assembly.pair_links.iter().flat_map(|l| [l.a.as_str(), l.b.as_str()]).collect();
        let mut logical: Vec<LogicalCurrent> = assembly
            .pair_links
            .iter()
            .map(|l| LogicalCurrent {
                name: l.name.clone(),
                terms: vec![(index(&l.a), 1.0), (index(&l.b), l.relative_sign)],
            })
            .collect();
        logical.extend(
            assembly
                .members
                .iter()
                .enumerate()
                .filter(|(_, m)| !linked.contains(m.name.as_str()))
                .map(|(i, m)| LogicalCurrent { name: m.name.clone(), terms: vec![(i, 1.0)] }),
        );
        Ok(CompiledAssembly { members, logical, segments_per_loop })
    }

    pub fn segments_per_loop(&self) -> usize {
        self.segments_per_loop
    }

    pub fn member_names(&self) -> impl Iterator<Item = &str> {
        self.members.iter().map(|m| m.name.as_str())
    }

    pub fn member_index(&self, name: &str) -> Result<usize, FieldError> {
        self.members.iter().position(|m| m.name == name).ok_or_else(|| FieldError::UnknownCoil(name.to_string()))
    }

    pub fn has_logical(&self, name: &str) -> bool {
        self.logical.iter().any(|l| l.name == name)
    }

    /// Members (index, sign) driven by a logical current.
    pub fn logical_terms(&self, name: &str) -> Result<&[(usize, f64)], FieldError> {
        self.logical
            .iter()
            .find(|l| l.name == name)
            .map(|l| l.terms.as_slice())
            .ok_or_else(|| FieldError::UnknownCoil(name.to_string()))
    }

    /// Per-member currents (A) for a drive.
    pub fn member_currents(&self, drive: &Drive) -> Result<Vec<f64>, FieldError> {
        let mut currents = vec![0.0; self.members.len()];
        for (name, &amps) in &drive.0 {
            if !amps.is_finite() {
                return Err(FieldError::InvalidParameter(format!("drive current {name} is not finite")));
            }
            for &(idx, sign) in self.logical_terms(name)? {
                currents[idx] += sign * amps;
            }
        }
        Ok(currents)
    }

    pub fn field(&self, drive: &Drive, at: &Vec3) -> Result<Vec3, FieldError> {
        self.field_from_member_currents(&self.member_currents(drive)?, at)
    }

    /// Superposition with explicit per-member currents (A), in member order.
    pub fn field_from_member_currents(&self, currents: &[f64], at: &Vec3) -> Result<Vec3, FieldError> {
        assert_eq!(currents.len(), self.members.len(), "one current per member");
        let mut total = Vec3::zeros();
        for (member, &amps) in self.members.iter().zip(currents) {
            if amps == 0.0 {
                continue;
            }
            total += member_field(&member.segments, at)? * amps;
        }
        Ok(total)
    }

    /// Field of one logical current at one ampere.
    pub fn field_per_amp(&self, logical: &str, at: &Vec3) -> Result<Vec3, FieldError> {
        let mut total = Vec3::zeros();
        for &(idx, sign) in self.logical_terms(logical)? {
            total += member_field(&self.members[idx].segments, at)? * sign;
        }
        Ok(total)
    }

    /// Jacobian `G[i][j] = ∂B_i/∂x_j` (G/mm) by central differences.
    pub fn gradient(&self, drive: &Drive, at: &Vec3, step: f64) -> Result<Mat3, FieldError> {
        let currents = self.member_currents(drive)?;
        central_jacobian(|p| self.field_from_member_currents(&currents, p), at, step)
    }
}

fn prepare(s: Segment) -> PreparedSegment {
    PreparedSegment { start: s.start, end: s.end, weight: s.weight, len_sq: (s.end - s.start).norm_squared() }
}

fn member_field(segments: &[PreparedSegment], at: &Vec3) -> Result<Vec3, FieldError> {
    let tol_sq = ON_CONDUCTOR_TOLERANCE_MM * ON_CONDUCTOR_TOLERANCE_MM;
    let mut b = Vec3::zeros();
    for s in segments {
        let r1 = at - s.start;
        let r2 = at - s.end;
        let cross = r1.cross(&r2);
        let n1 = r1.norm();
        let n2 = r2.norm();
        // |r1 × r2| / |L| is the distance to the infinite line.
        if cross.norm_squared() <= tol_sq * s.len_sq || n1 <= ON_CONDUCTOR_TOLERANCE_MM || n2 <= ON_CONDUCTOR_TOLERANCE_MM {
            let d = distance_to_segment(&s.start, &s.end, at);
            if d <= ON_CONDUCTOR_TOLERANCE_MM {
                return Err(FieldError::OnConductor { distance_mm: d });
            }
        }
        let n1n2 = n1 * n2;
        b += cross * (s.weight * (n1 + n2) / (n1n2 * (n1n2 + r1.dot(&r2))));
    }
    Ok(b * MU0_OVER_4PI)
}

/// Central-difference Jacobian of a vector field.
pub fn central_jacobian<F>(mut f: F, at: &Vec3, step: f64) -> Result<Mat3, FieldError>
where
    F: FnMut(&Vec3) -> Result<Vec3, FieldError>,
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(FieldError::InvalidParameter(format!("gradient step must be positive, got {step}")));
    }
    let mut g = Mat3::zeros();
    for j in 0..3 {
        let mut e = Vec3::zeros();
        e[j] = step;
        let col = (f(&(at + e))? - f(&(at - e))?) / (2.0 * step);
        g.set_column(j, &col);
    }
    Ok(g)
}

/// Field of an assembly at one point (compiles the assembly on each call).
pub fn field_of_assembly(
    assembly: &CoilAssembly,
    drive: &Drive,
    at: &Vec3,
    segments_per_loop: usize,
) -> Result<Vec3, FieldError> {
    CompiledAssembly::new(assembly, segments_per_loop)?.field(drive, at)
}

/// Field Jacobian of an assembly at one point, default discretization.
pub fn gradient_matrix(assembly: &CoilAssembly, drive: &Drive, at: &Vec3, step: f64) -> Result<Mat3, FieldError> {
    CompiledAssembly::new(assembly, DEFAULT_SEGMENTS_PER_LOOP)?.gradient(drive, at, step)
}
