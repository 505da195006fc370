//! Static network model of a radial three-phase feeder.
//!
//! A [`FeederModel`] is built from the JSON feeder format (see
//! [`FeederFile`]) and validated once at load time. After that it is
//! immutable and can be shared between concurrent scenario runs.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// 3×3 phase-domain impedance or admittance block. Rows and columns for
/// absent phases are zero.
pub type PhaseMatrix = [[Complex64; 3]; 3];

pub const ZERO_MATRIX: PhaseMatrix = [[Complex64 { re: 0.0, im: 0.0 }; 3]; 3];

/// Tap bounds of the regulator model (32 steps, ±10 % at the default step).
pub const TAP_MIN: i32 = -16;
pub const TAP_MAX: i32 = 16;
pub const DEFAULT_TAP_STEP: f64 = 0.00625;

#[derive(Debug, Error)]
pub enum FeederError {
    #[error("failed to read feeder file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed feeder file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid phase string {0:?} (expected a non-empty subset of \"abc\")")]
    Phases(String),
    #[error("invalid feeder: {0}")]
    Invalid(String),
    #[error("non-radial feeder: branch {branch} closes a cycle through bus {bus}")]
    NonRadial { branch: String, bus: String },
    #[error("bus {0} is not reachable from the source")]
    Unreachable(String),
    #[error("unknown bus {0}")]
    UnknownBus(String),
    #[error("unknown branch {0}")]
    UnknownBranch(String),
    #[error("bus {0} is the source bus and has no upstream branch")]
    SourceHasNoUpstream(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    A = 0,
    B = 1,
    C = 2,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Phase> {
        Phase::ALL.get(i).copied()
    }

    pub fn letter(self) -> char {
        ['a', 'b', 'c'][self.index()]
    }

    fn parse(c: char) -> Option<Phase> {
        match c.to_ascii_lowercase() {
            'a' => Some(Phase::A),
            'b' => Some(Phase::B),
            'c' => Some(Phase::C),
            _ => None,
        }
    }
}

impl Serialize for Phase {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.letter().to_string())
    }
}

impl<'de> Deserialize<'de> for Phase {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let mut chars = s.chars();
        match (chars.next().and_then(Phase::parse), chars.next()) {
            (Some(p), None) => Ok(p),
            _ => Err(serde::de::Error::custom(format!("invalid phase {s:?}"))),
        }
    }
}

/// Non-empty subset of {a, b, c}.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct PhaseSet(u8);

impl PhaseSet {
    pub const ABC: PhaseSet = PhaseSet(0b111);

    pub fn new(a: bool, b: bool, c: bool) -> Option<PhaseSet> {
        let bits = a as u8 | (b as u8) << 1 | (c as u8) << 2;
        (bits != 0).then_some(PhaseSet(bits))
    }

    pub fn single(p: Phase) -> PhaseSet {
        PhaseSet(1 << p.index())
    }

    pub fn contains(self, p: Phase) -> bool {
        self.0 & (1 << p.index()) != 0
    }

    pub fn has(self, i: usize) -> bool {
        i < 3 && self.0 & (1 << i) != 0
    }

    pub fn is_subset_of(self, other: PhaseSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Phase> {
        Phase::ALL.into_iter().filter(move |p| self.contains(*p))
    }

    pub fn indices(self) -> impl Iterator<Item = usize> {
        (0..3).filter(move |i| self.has(*i))
    }
}

impl std::str::FromStr for PhaseSet {
    type Err = FeederError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut bits = 0u8;
        for c in s.chars() {
            let p = Phase::parse(c).ok_or_else(|| FeederError::Phases(s.to_string()))?;
            let bit = 1 << p.index();
            if bits & bit != 0 {
                return Err(FeederError::Phases(s.to_string()));
            }
            bits |= bit;
        }
        if bits == 0 {
            return Err(FeederError::Phases(s.to_string()));
        }
        Ok(PhaseSet(bits))
    }
}

impl fmt::Display for PhaseSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in self.iter() {
            write!(f, "{}", p.letter())?;
        }
        Ok(())
    }
}

impl fmt::Debug for PhaseSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PhaseSet({self})")
    }
}

impl Serialize for PhaseSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for PhaseSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: String,
    pub phases: PhaseSet,
    /// Line-to-neutral base voltage in kV.
    pub base_kv: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub id: String,
    pub from: String,
    pub to: String,
    pub phases: PhaseSet,
    /// Series impedance in ohms, referred to the `to` bus voltage base.
    pub z_ohm: PhaseMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseLoad {
    pub phase: Phase,
    pub kw: f64,
    pub kvar: f64,
}

/// Fractions of constant-power, constant-current and constant-impedance
/// behaviour, applied to both P and Q.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZipFractions {
    pub power: f64,
    pub current: f64,
    pub impedance: f64,
}

impl ZipFractions {
    pub const CONSTANT_POWER: ZipFractions = ZipFractions { power: 1.0, current: 0.0, impedance: 0.0 };

    /// Voltage dependence multiplier at magnitude `v` (pu, nominal 1.0).
    pub fn factor(&self, v: f64) -> f64 {
        self.power + self.current * v + self.impedance * v * v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Load {
    pub bus: String,
    pub per_phase: Vec<PhaseLoad>,
    pub zip: ZipFractions,
}

impl Load {
    pub fn phases(&self) -> Option<PhaseSet> {
        let mut bits = 0u8;
        for pl in &self.per_phase {
            bits |= 1 << pl.phase.index();
        }
        (bits != 0).then_some(PhaseSet(bits))
    }

    pub fn total_kw(&self) -> f64 {
        self.per_phase.iter().map(|p| p.kw).sum()
    }

    pub fn total_kvar(&self) -> f64 {
        self.per_phase.iter().map(|p| p.kvar).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PvInverter {
    pub bus: String,
    pub phases: PhaseSet,
    pub rated_kva: f64,
    pub rated_kw: f64,
    /// Upstream branch whose current this inverter's controller measures.
    pub monitored_branch: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Regulator {
    pub branch: String,
    pub taps: [i32; 3],
    pub setpoint_pu: f64,
    pub bandwidth_pu: f64,
    pub step: f64,
}

impl Regulator {
    /// Voltage ratio applied on phase `i` at the current tap.
    pub fn ratio(&self, i: usize) -> f64 {
        1.0 + self.taps[i] as f64 * self.step
    }

    /// One control action: every phase outside the deadband moves a single
    /// tap toward the setpoint, clamped to the tap range.
    pub fn step_control(&mut self, controlled_voltage: [f64; 3], phases: PhaseSet) {
        let half_band = 0.5 * self.bandwidth_pu;
        for i in phases.indices() {
            let err = controlled_voltage[i] - self.setpoint_pu;
            if !err.is_finite() || err.abs() <= half_band {
                continue;
            }
            let dir = if err > 0.0 { -1 } else { 1 };
            self.taps[i] = (self.taps[i] + dir).clamp(TAP_MIN, TAP_MAX);
        }
    }
}

/// Functional form of the regulator tap rule.
pub fn regulator_step(reg: &Regulator, controlled_voltage: [f64; 3], phases: PhaseSet) -> Regulator {
    let mut next = reg.clone();
    next.step_control(controlled_voltage, phases);
    next
}

/// Validated radial feeder with precomputed topology.
#[derive(Debug, Clone)]
pub struct FeederModel {
    pub name: Option<String>,
    pub comment: Option<String>,
    pub base_mva: f64,
    pub source_bus: String,
    pub source_voltage_pu: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub loads: Vec<Load>,
    pub pvs: Vec<PvInverter>,
    pub regulators: Vec<Regulator>,
    topo: Topology,
}

#[derive(Debug, Clone, Default)]
struct Topology {
    bus_index: HashMap<String, usize>,
    branch_index: HashMap<String, usize>,
    source: usize,
    /// Bus indices in breadth-first order from the source.
    order: Vec<usize>,
    /// Upstream branch of each bus (None for the source).
    parent_branch: Vec<Option<usize>>,
    branch_from: Vec<usize>,
    branch_to: Vec<usize>,
    children: Vec<Vec<usize>>,
    regulator_on_branch: Vec<Option<usize>>,
    /// Per-unit series impedance of each branch.
    z_pu: Vec<PhaseMatrix>,
}

impl FeederModel {
    pub fn bus_index(&self, id: &str) -> Result<usize, FeederError> {
        self.topo.bus_index.get(id).copied().ok_or_else(|| FeederError::UnknownBus(id.to_string()))
    }

    pub fn branch_index(&self, id: &str) -> Result<usize, FeederError> {
        self.topo.branch_index.get(id).copied().ok_or_else(|| FeederError::UnknownBranch(id.to_string()))
    }

    pub fn source_index(&self) -> usize {
        self.topo.source
    }

    /// Buses in breadth-first order from the source.
    pub fn sweep_order(&self) -> &[usize] {
        &self.topo.order
    }

    pub fn parent_branch(&self, bus: usize) -> Option<usize> {
        self.topo.parent_branch[bus]
    }

    pub fn branch_from(&self, branch: usize) -> usize {
        self.topo.branch_from[branch]
    }

    pub fn branch_to(&self, branch: usize) -> usize {
        self.topo.branch_to[branch]
    }

    /// Branches leaving `bus` toward the leaves.
    pub fn child_branches(&self, bus: usize) -> &[usize] {
        &self.topo.children[bus]
    }

    pub fn regulator_on(&self, branch: usize) -> Option<usize> {
        self.topo.regulator_on_branch[branch]
    }

    pub fn z_pu(&self, branch: usize) -> &PhaseMatrix {
        &self.topo.z_pu[branch]
    }

    /// Per-phase power base in kVA.
    pub fn phase_base_kva(&self) -> f64 {
        self.base_mva * 1000.0 / 3.0
    }

    /// Impedance base (ohm) at a bus.
    pub fn z_base_ohm(&self, bus: usize) -> f64 {
        let kv = self.buses[bus].base_kv;
        kv * kv / (self.base_mva / 3.0)
    }

    /// Current base (A) at a bus.
    pub fn i_base_amp(&self, bus: usize) -> f64 {
        self.phase_base_kva() / self.buses[bus].base_kv
    }

    pub fn pv_bus_index(&self, pv: usize) -> usize {
        self.topo.bus_index[&self.pvs[pv].bus]
    }

    pub fn pv_branch_index(&self, pv: usize) -> usize {
        self.topo.branch_index[&self.pvs[pv].monitored_branch]
    }

    /// Initial taps of all regulators, indexed like `regulators`.
    pub fn initial_taps(&self) -> Vec<[i32; 3]> {
        self.regulators.iter().map(|r| r.taps).collect()
    }

    /// Buses on the path from `bus` up to the source, starting at `bus`.
    pub fn path_to_source(&self, bus: usize) -> Vec<usize> {
        let mut path = vec![bus];
        let mut cur = bus;
        while let Some(br) = self.topo.parent_branch[cur] {
            cur = self.topo.branch_from[br];
            path.push(cur);
        }
        path
    }

    pub fn with_source_voltage(&self, pu: f64) -> FeederModel {
        let mut m = self.clone();
        m.source_voltage_pu = pu;
        m
    }

    fn build(
        name: Option<String>,
        comment: Option<String>,
        base_mva: f64,
        source_bus: String,
        source_voltage_pu: f64,
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        loads: Vec<Load>,
        pvs: Vec<PvInverter>,
        regulators: Vec<Regulator>,
    ) -> Result<FeederModel, FeederError> {
        let invalid = |m: String| Err(FeederError::Invalid(m));
        if !(base_mva > 0.0 && base_mva.is_finite()) {
            return invalid(format!("base_mva must be positive, got {base_mva}"));
        }
        if !(source_voltage_pu > 0.0 && source_voltage_pu.is_finite()) {
            return invalid(format!("source voltage must be positive, got {source_voltage_pu}"));
        }

        let mut bus_index = HashMap::new();
        for (i, b) in buses.iter().enumerate() {
            if !(b.base_kv > 0.0 && b.base_kv.is_finite()) {
                return invalid(format!("bus {}: base_kv must be positive", b.id));
            }
            if bus_index.insert(b.id.clone(), i).is_some() {
                return invalid(format!("duplicate bus id {}", b.id));
            }
        }
        let source = *bus_index.get(&source_bus).ok_or_else(|| FeederError::UnknownBus(source_bus.clone()))?;

        let mut branch_index = HashMap::new();
        let mut branch_from = Vec::with_capacity(branches.len());
        let mut branch_to = Vec::with_capacity(branches.len());
        for (k, br) in branches.iter().enumerate() {
            if branch_index.insert(br.id.clone(), k).is_some() {
                return invalid(format!("duplicate branch id {}", br.id));
            }
            let f = *bus_index
                .get(&br.from)
                .ok_or_else(|| FeederError::Invalid(format!("branch {}: unknown from bus {}", br.id, br.from)))?;
            let t = *bus_index
                .get(&br.to)
                .ok_or_else(|| FeederError::Invalid(format!("branch {}: unknown to bus {}", br.id, br.to)))?;
            if f == t {
                return invalid(format!("branch {} connects bus {} to itself", br.id, br.from));
            }
            if !br.phases.is_subset_of(buses[f].phases) || !br.phases.is_subset_of(buses[t].phases) {
                return invalid(format!(
                    "branch {}: phases {} not present on both {} ({}) and {} ({})",
                    br.id, br.phases, br.from, buses[f].phases, br.to, buses[t].phases
                ));
            }
            for m in 0..3 {
                for n in 0..3 {
                    let z = br.z_ohm[m][n];
                    if !(z.re.is_finite() && z.im.is_finite()) {
                        return invalid(format!("branch {}: non-finite impedance", br.id));
                    }
                    let present = br.phases.has(m) && br.phases.has(n);
                    if !present && z != Complex64::new(0.0, 0.0) {
                        return invalid(format!(
                            "branch {}: impedance entry ({m},{n}) belongs to an absent phase",
                            br.id
                        ));
                    }
                    if (z - br.z_ohm[n][m]).norm() > 1e-12 * (1.0 + z.norm()) {
                        return invalid(format!("branch {}: impedance matrix is not symmetric", br.id));
                    }
                }
                if br.phases.has(m) && br.z_ohm[m][m].re < 0.0 {
                    return invalid(format!("branch {}: negative self resistance", br.id));
                }
            }
            branch_from.push(f);
            branch_to.push(t);
        }

        // A branch joining two already connected buses closes a loop.
        let mut root: Vec<usize> = (0..buses.len()).collect();
        fn find(root: &mut [usize], mut i: usize) -> usize {
            while root[i] != i {
                root[i] = root[root[i]];
                i = root[i];
            }
            i
        }
        for k in 0..branches.len() {
            let (a, b) = (find(&mut root, branch_from[k]), find(&mut root, branch_to[k]));
            if a == b {
                return Err(FeederError::NonRadial {
                    branch: branches[k].id.clone(),
                    bus: buses[branch_to[k]].id.clone(),
                });
            }
            root[a] = b;
        }

        // Radiality: every non-source bus has exactly one incoming branch and
        // the graph is connected from the source.
        let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); buses.len()];
        for k in 0..branches.len() {
            adjacency[branch_from[k]].push(k);
            adjacency[branch_to[k]].push(k);
        }
        let mut parent_branch: Vec<Option<usize>> = vec![None; buses.len()];
        let mut visited = vec![false; buses.len()];
        let mut used = vec![false; branches.len()];
        let mut order = Vec::with_capacity(buses.len());
        let mut queue = VecDeque::from([source]);
        visited[source] = true;
        while let Some(b) = queue.pop_front() {
            order.push(b);
            for &k in &adjacency[b] {
                if used[k] {
                    continue;
                }
                used[k] = true;
                let other = if branch_from[k] == b { branch_to[k] } else { branch_from[k] };
                if visited[other] {
                    return Err(FeederError::NonRadial {
                        branch: branches[k].id.clone(),
                        bus: buses[other].id.clone(),
                    });
                }
                if branch_to[k] != other {
                    return invalid(format!(
                        "branch {} is oriented toward the source (from {} to {})",
                        branches[k].id, branches[k].from, branches[k].to
                    ));
                }
                visited[other] = true;
                parent_branch[other] = Some(k);
                queue.push_back(other);
            }
        }
        if let Some(i) = visited.iter().position(|v| !v) {
            return Err(FeederError::Unreachable(buses[i].id.clone()));
        }
        let mut children = vec![Vec::new(); buses.len()];
        for k in 0..branches.len() {
            children[branch_from[k]].push(k);
        }

        for ld in &loads {
            let b = *bus_index
                .get(&ld.bus)
                .ok_or_else(|| FeederError::Invalid(format!("load on unknown bus {}", ld.bus)))?;
            let phases =
                ld.phases().ok_or_else(|| FeederError::Invalid(format!("load on bus {} has no phases", ld.bus)))?;
            if !phases.is_subset_of(buses[b].phases) {
                return invalid(format!(
                    "load on bus {}: phases {} not present on bus ({})",
                    ld.bus, phases, buses[b].phases
                ));
            }
            let z = ld.zip;
            let fr = [z.power, z.current, z.impedance];
            if fr.iter().any(|f| !(0.0..=1.0).contains(f)) || (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return invalid(format!("load on bus {}: zip fractions {fr:?} must lie in [0,1] and sum to 1", ld.bus));
            }
            if ld.per_phase.iter().any(|p| !(p.kw.is_finite() && p.kvar.is_finite())) {
                return invalid(format!("load on bus {}: non-finite power", ld.bus));
            }
        }

        let mut pvs = pvs;
        for pv in pvs.iter_mut() {
            let b =
                *bus_index.get(&pv.bus).ok_or_else(|| FeederError::Invalid(format!("pv on unknown bus {}", pv.bus)))?;
            if !pv.phases.is_subset_of(buses[b].phases) {
                return invalid(format!("pv on bus {}: phases {} not present on bus", pv.bus, pv.phases));
            }
            if !(pv.rated_kva > 0.0) || !(pv.rated_kw >= 0.0) {
                return invalid(format!("pv on bus {}: ratings must be positive", pv.bus));
            }
            if pv.rated_kw > pv.rated_kva {
                return invalid(format!(
                    "pv on bus {}: rated_kw {} exceeds rated_kva {}",
                    pv.bus, pv.rated_kw, pv.rated_kva
                ));
            }
            let up = parent_branch[b]
                .ok_or_else(|| FeederError::Invalid(format!("pv on source bus {} has no upstream branch", pv.bus)))?;
            if pv.monitored_branch.is_empty() {
                pv.monitored_branch = branches[up].id.clone();
            } else if pv.monitored_branch != branches[up].id {
                return invalid(format!(
                    "pv on bus {}: monitored branch {} is not the upstream branch {}",
                    pv.bus, pv.monitored_branch, branches[up].id
                ));
            }
        }

        let mut regulator_on_branch = vec![None; branches.len()];
        for (r, reg) in regulators.iter().enumerate() {
            let k = *branch_index
                .get(&reg.branch)
                .ok_or_else(|| FeederError::Invalid(format!("regulator on unknown branch {}", reg.branch)))?;
            if regulator_on_branch[k].replace(r).is_some() {
                return invalid(format!("two regulators on branch {}", reg.branch));
            }
            if reg.taps.iter().any(|t| !(TAP_MIN..=TAP_MAX).contains(t)) {
                return invalid(format!("regulator {}: tap outside [{TAP_MIN}, {TAP_MAX}]", reg.branch));
            }
            if !(reg.bandwidth_pu > 0.0) {
                return invalid(format!("regulator {}: bandwidth must be positive", reg.branch));
            }
            if !(reg.step > 0.0) || !(reg.setpoint_pu > 0.0) {
                return invalid(format!("regulator {}: step and setpoint must be positive", reg.branch));
            }
        }

        let phase_mva = base_mva / 3.0;
        let z_pu = branches
            .iter()
            .enumerate()
            .map(|(k, br)| {
                let kv = buses[branch_to[k]].base_kv;
                let zb = kv * kv / phase_mva;
                let mut z = ZERO_MATRIX;
                for m in 0..3 {
                    for n in 0..3 {
                        z[m][n] = br.z_ohm[m][n] / zb;
                    }
                }
                z
            })
            .collect();

        Ok(FeederModel {
            name,
            comment,
            base_mva,
            source_bus,
            source_voltage_pu,
            buses,
            branches,
            loads,
            pvs,
            regulators,
            topo: Topology {
                bus_index,
                branch_index,
                source,
                order,
                parent_branch,
                branch_from,
                branch_to,
                children,
                regulator_on_branch,
                z_pu,
            },
        })
    }
}

/// Returns the id of the unique branch between `bus` and its parent.
pub fn upstream_branch(model: &FeederModel, bus: &str) -> Result<String, FeederError> {
    let b = model.bus_index(bus)?;
    let k = model.parent_branch(b).ok_or_else(|| FeederError::SourceHasNoUpstream(bus.to_string()))?;
    Ok(model.branches[k].id.clone())
}

// ---------------------------------------------------------------------------
// File format

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeederFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    pub base_mva: f64,
    pub source: SourceSpec,
    pub buses: Vec<BusSpec>,
    pub branches: Vec<BranchSpec>,
    #[serde(default)]
    pub loads: Vec<LoadSpec>,
    #[serde(default)]
    pub pvs: Vec<PvSpec>,
    #[serde(default)]
    pub regulators: Vec<RegulatorSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub bus: String,
    pub voltage_pu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusSpec {
    pub id: String,
    pub phases: PhaseSet,
    pub base_kv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchSpec {
    pub id: String,
    pub from: String,
    pub to: String,
    pub phases: PhaseSet,
    /// 3×3 array of `[r, x]` ohm pairs.
    pub z: [[[f64; 2]; 3]; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadSpec {
    pub bus: String,
    pub per_phase: Vec<PhaseLoad>,
    /// `[constant power, constant current, constant impedance]`.
    #[serde(default = "default_zip")]
    pub zip: [f64; 3],
}

fn default_zip() -> [f64; 3] {
    [1.0, 0.0, 0.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PvSpec {
    pub bus: String,
    pub phases: PhaseSet,
    pub rated_kva: f64,
    pub rated_kw: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monitored_branch: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegulatorSpec {
    pub branch: String,
    pub setpoint_pu: f64,
    pub bandwidth_pu: f64,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default)]
    pub taps: [i32; 3],
}

fn default_step() -> f64 {
    DEFAULT_TAP_STEP
}

impl TryFrom<FeederFile> for FeederModel {
    type Error = FeederError;

    fn try_from(f: FeederFile) -> Result<Self, Self::Error> {
        let buses = f.buses.into_iter().map(|b| Bus { id: b.id, phases: b.phases, base_kv: b.base_kv }).collect();
        let branches = f
            .branches
            .into_iter()
            .map(|b| {
                let mut z = ZERO_MATRIX;
                for m in 0..3 {
                    for n in 0..3 {
                        z[m][n] = Complex64::new(b.z[m][n][0], b.z[m][n][1]);
                    }
                }
                Branch { id: b.id, from: b.from, to: b.to, phases: b.phases, z_ohm: z }
            })
            .collect();
        let loads = f
            .loads
            .into_iter()
            .map(|l| Load {
                bus: l.bus,
                per_phase: l.per_phase,
                zip: ZipFractions { power: l.zip[0], current: l.zip[1], impedance: l.zip[2] },
            })
            .collect();
        let pvs = f
            .pvs
            .into_iter()
            .map(|p| PvInverter {
                bus: p.bus,
                phases: p.phases,
                rated_kva: p.rated_kva,
                rated_kw: p.rated_kw,
                monitored_branch: p.monitored_branch.unwrap_or_default(),
            })
            .collect();
        let regulators = f
            .regulators
            .into_iter()
            .map(|r| Regulator {
                branch: r.branch,
                taps: r.taps,
                setpoint_pu: r.setpoint_pu,
                bandwidth_pu: r.bandwidth_pu,
                step: r.step,
            })
            .collect();
        FeederModel::build(
            f.name,
            f.comment,
            f.base_mva,
            f.source.bus,
            f.source.voltage_pu,
            buses,
            branches,
            loads,
            pvs,
            regulators,
        )
    }
}

impl From<&FeederModel> for FeederFile {
    fn from(m: &FeederModel) -> Self {
        FeederFile {
            name: m.name.clone(),
            comment: m.comment.clone(),
            base_mva: m.base_mva,
            source: SourceSpec { bus: m.source_bus.clone(), voltage_pu: m.source_voltage_pu },
            buses: m.buses.iter().map(|b| BusSpec { id: b.id.clone(), phases: b.phases, base_kv: b.base_kv }).collect(),
            branches: m
                .branches
                .iter()
                .map(|b| {
                    let mut z = [[[0.0; 2]; 3]; 3];
                    for i in 0..3 {
                        for j in 0..3 {
                            z[i][j] = [b.z_ohm[i][j].re, b.z_ohm[i][j].im];
                        }
                    }
                    BranchSpec { id: b.id.clone(), from: b.from.clone(), to: b.to.clone(), phases: b.phases, z }
                })
                .collect(),
            loads: m
                .loads
                .iter()
                .map(|l| LoadSpec {
                    bus: l.bus.clone(),
                    per_phase: l.per_phase.clone(),
                    zip: [l.zip.power, l.zip.current, l.zip.impedance],
                })
                .collect(),
            pvs: m
                .pvs
                .iter()
                .map(|p| PvSpec {
                    bus: p.bus.clone(),
                    phases: p.phases,
                    rated_kva: p.rated_kva,
                    rated_kw: p.rated_kw,
                    monitored_branch: Some(p.monitored_branch.clone()),
                })
                .collect(),
            regulators: m
                .regulators
                .iter()
                .map(|r| RegulatorSpec {
                    branch: r.branch.clone(),
                    setpoint_pu: r.setpoint_pu,
                    bandwidth_pu: r.bandwidth_pu,
                    step: r.step,
                    taps: r.taps,
                })
                .collect(),
        }
    }
}

impl PartialEq for FeederModel {
    fn eq(&self, other: &Self) -> bool {
        FeederFile::from(self) == FeederFile::from(other)
    }
}

pub fn parse_feeder(json: &str) -> Result<FeederModel, FeederError> {
    let file: FeederFile = serde_json::from_str(json)?;
    FeederModel::try_from(file)
}

pub fn load_feeder(path: impl AsRef<Path>) -> Result<FeederModel, FeederError> {
    let path = path.as_ref();
    let text =
        std::fs::read_to_string(path).map_err(|source| FeederError::Io { path: path.display().to_string(), source })?;
    parse_feeder(&text)
}

pub fn serialize_feeder(model: &FeederModel) -> String {
    serde_json::to_string_pretty(&FeederFile::from(model)).expect("feeder file is always serializable")
}

/// Bundled feeder fixtures.
pub mod bundled {
    use super::{parse_feeder, FeederModel};

    pub const FOUR_BUS_JSON: &str = include_str!("../data/feeders/4bus.json");
    pub const THIRTEEN_BUS_JSON: &str = include_str!("../data/feeders/13bus.json");

    /// Balanced 4-bus feeder with two PV inverters (nodes 3 and 4).
    pub fn four_bus() -> FeederModel {
        parse_feeder(FOUR_BUS_JSON).expect("bundled 4-bus feeder is valid")
    }

    /// Unbalanced 13-bus feeder with single-phase laterals, four PVs and one regulator.
    pub fn thirteen_bus() -> FeederModel {
        parse_feeder(THIRTEEN_BUS_JSON).expect("bundled 13-bus feeder is valid")
    }

    /// Accepts `4bus`/`13bus`, with or without a `.json` suffix.
    pub fn by_name(name: &str) -> Option<FeederModel> {
        match name.strip_suffix(".json").unwrap_or(name) {
            "4bus" => Some(four_bus()),
            "13bus" => Some(thirteen_bus()),
            _ => None,
        }
    }
}

/// Tally of elements, handy for summaries.
pub fn element_counts(model: &FeederModel) -> BTreeMap<&'static str, usize> {
    BTreeMap::from([
        ("buses", model.buses.len()),
        ("branches", model.branches.len()),
        ("loads", model.loads.len()),
        ("pvs", model.pvs.len()),
        ("regulators", model.regulators.len()),
    ])
}
