//! BIC comparison of the homogeneous and partitioned models, and recursive
//! partitioning of the time axis.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::em::{fit, fit_homogeneous, fix_lambda, EMConfig, FitResult, HomogeneousFit};
use crate::error::{Error, Result};
use crate::initializer::InitConfig;
use crate::model::{EdgeEvent, EventLog, PartitionModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Homogeneous,
    Heterogeneous,
}

/// Free parameters: one law for the homogeneous model; two laws and the
/// window endpoints for the partitioned one. Memberships are latent labels.
pub fn parameter_counts(k: usize) -> (usize, usize) {
    (k + 1, 2 * (k + 1) + 2)
}

pub fn bic(loglik: f64, params: usize, events: usize) -> f64 {
    -2.0 * loglik + params as f64 * (events as f64).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BicComparison {
    pub bic_hom: f64,
    pub bic_het: f64,
    pub decision: Decision,
    pub events: usize,
}

impl BicComparison {
    /// `bic_het - bic_hom`; negative favours the partition.
    pub fn delta(&self) -> f64 {
        self.bic_het - self.bic_hom
    }
}

/// Compares the two fits by BIC with sample size equal to the number of
/// observed events. An empty log is homogeneous by convention, as is a tie.
pub fn compare(k: usize, events: usize, loglik_hom: f64, loglik_het: f64) -> BicComparison {
    let (p_hom, p_het) = parameter_counts(k);
    if events == 0 {
        return BicComparison { bic_hom: 0.0, bic_het: 0.0, decision: Decision::Homogeneous, events };
    }
    let bic_hom = bic(loglik_hom, p_hom, events);
    let bic_het = bic(loglik_het, p_het, events);
    let decision = if bic_het < bic_hom { Decision::Heterogeneous } else { Decision::Homogeneous };
    BicComparison { bic_hom, bic_het, decision, events }
}

/// An interval of a region's local time axis and where it sits in the
/// original time axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Piece {
    pub local_start: f64,
    pub original_start: f64,
    pub length: f64,
}

/// Piecewise-shift map from a spliced region's time axis to the original
/// axis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeMap {
    pub pieces: Vec<Piece>,
}

impl TimeMap {
    pub fn identity(horizon: f64) -> Self {
        Self { pieces: vec![Piece { local_start: 0.0, original_start: 0.0, length: horizon }] }
    }

    pub fn to_original(&self, t: f64) -> f64 {
        let piece = self
            .pieces
            .iter()
            .find(|p| t <= p.local_start + p.length)
            .or(self.pieces.last())
            .expect("time map has at least one piece");
        piece.original_start + (t - piece.local_start)
    }

    /// Original-time intervals covered by local `(a, b]`.
    pub fn original_intervals(&self, a: f64, b: f64) -> Vec<(f64, f64)> {
        self.pieces
            .iter()
            .filter_map(|p| {
                let lo = a.max(p.local_start);
                let hi = b.min(p.local_start + p.length);
                (hi > lo).then_some((p.original_start + lo - p.local_start, p.original_start + hi - p.local_start))
            })
            .collect()
    }

    /// Map for local `(a, b]` re-based to start at `new_start`.
    fn restrict(&self, a: f64, b: f64, new_start: f64) -> Vec<Piece> {
        let mut out = Vec::new();
        let mut cursor = new_start;
        for p in &self.pieces {
            let lo = a.max(p.local_start);
            let hi = b.min(p.local_start + p.length);
            if hi > lo {
                out.push(Piece {
                    local_start: cursor,
                    original_start: p.original_start + lo - p.local_start,
                    length: hi - lo,
                });
                cursor += hi - lo;
            }
        }
        out
    }

    /// Map for the spliced complement of local `(a, b]` within `[0, horizon]`.
    pub fn outside(&self, a: f64, b: f64, horizon: f64) -> Self {
        let mut pieces = self.restrict(0.0, a, 0.0);
        pieces.extend(self.restrict(b, horizon, a));
        if pieces.is_empty() {
            pieces.push(Piece { local_start: 0.0, original_start: self.to_original(0.0), length: 0.0 });
        }
        Self { pieces }
    }

    /// Map for local `(a, b]` re-based to start at zero.
    pub fn inside(&self, a: f64, b: f64) -> Self {
        let mut pieces = self.restrict(a, b, 0.0);
        if pieces.is_empty() {
            pieces.push(Piece { local_start: 0.0, original_start: self.to_original(a), length: 0.0 });
        }
        Self { pieces }
    }
}

/// Events outside `(a, b]` with the window cut out of the time axis.
pub fn splice_outside(log: &EventLog, a: f64, b: f64) -> Result<EventLog> {
    let width = b - a;
    let events: Vec<EdgeEvent> = log
        .events()
        .iter()
        .filter(|e| !(e.t > a && e.t <= b))
        .map(|e| EdgeEvent { t: if e.t > b { e.t - width } else { e.t }, ..*e })
        .collect();
    EventLog::new(events, log.n(), log.horizon() - width, log.k(), log.mode())
}

/// Events inside `(a, b]`, shifted to start at zero.
pub fn splice_inside(log: &EventLog, a: f64, b: f64) -> Result<EventLog> {
    let events: Vec<EdgeEvent> =
        log.events().iter().filter(|e| e.t > a && e.t <= b).map(|e| EdgeEvent { t: e.t - a, ..*e }).collect();
    EventLog::new(events, log.n(), b - a, log.k(), log.mode())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    /// Regions with fewer events are not examined.
    pub floor: usize,
    /// Deepest recursion level examined; the whole log is level 0.
    pub max_depth: usize,
    /// Bin width for fixing lambda; `None` means one hundredth of the
    /// whole log's horizon.
    pub time_unit: Option<f64>,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self { floor: 50, max_depth: 3, time_unit: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Root,
    Outside,
    Inside,
}

/// One region that was examined, accepted or not.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    pub branch: Branch,
    /// Original-time intervals making up the region.
    pub region: Vec<(f64, f64)>,
    pub events: usize,
    pub lambda: Option<f64>,
    pub comparison: Option<BicComparison>,
    pub outcome: String,
}

/// An accepted partition with its window expressed in original time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AcceptedPartition {
    pub node: usize,
    /// Model in the region's local time axis.
    pub model: PartitionModel,
    /// The window in original time, one interval per spliced piece.
    pub window: Vec<(f64, f64)>,
    pub loglik_het: f64,
    pub loglik_hom: f64,
    pub delta_bic: f64,
    pub membership: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// The subset equals the parent partition's subset or its complement,
    /// so this node re-describes the parent's split rather than adding one.
    pub repeats_parent: bool,
}

impl AcceptedPartition {
    /// Smallest interval containing the window in original time.
    pub fn span(&self) -> (f64, f64) {
        let start = self.window.first().map_or(0.0, |w| w.0);
        let end = self.window.last().map_or(0.0, |w| w.1);
        (start, end)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionReport {
    pub bic_hom: f64,
    pub bic_het: f64,
    pub decision: Decision,
    pub partitions: Vec<AcceptedPartition>,
    pub nodes: Vec<RegionNode>,
    pub stopped_reason: String,
}

/// Single comparison on a fitted pair, as a report.
pub fn bic_compare(log: &EventLog, hom: &HomogeneousFit, het: &FitResult) -> SelectionReport {
    let cmp = compare(log.k(), log.len(), hom.loglik, het.loglik);
    let accepted = cmp.decision == Decision::Heterogeneous;
    let partitions = if accepted {
        vec![AcceptedPartition {
            node: 0,
            model: het.model.clone(),
            window: vec![(het.model.window.start, het.model.window.end)],
            loglik_het: het.loglik,
            loglik_hom: hom.loglik,
            delta_bic: cmp.delta(),
            membership: het.membership.clone(),
            iterations: het.iterations,
            converged: het.converged,
            repeats_parent: false,
        }]
    } else {
        Vec::new()
    };
    SelectionReport {
        bic_hom: cmp.bic_hom,
        bic_het: cmp.bic_het,
        decision: cmp.decision,
        partitions,
        nodes: Vec::new(),
        stopped_reason: if accepted { "single comparison".into() } else { "root homogeneous".into() },
    }
}

struct Pending {
    log: EventLog,
    map: TimeMap,
    parent: Option<usize>,
    depth: usize,
    branch: Branch,
}

/// Fits and compares on the whole log; each accepted partition spawns two
/// regions, the time outside its window (spliced together) and the time
/// inside it, which are examined the same way. Regions are visited depth
/// first, outside before inside.
pub fn iterative_partition<R: Rng + ?Sized>(
    log: &EventLog,
    em: &EMConfig,
    init: &InitConfig,
    cfg: &SelectionConfig,
    rng: &mut R,
) -> Result<SelectionReport> {
    let unit = cfg.time_unit.unwrap_or(log.horizon() / 100.0);
    if !(unit.is_finite() && unit > 0.0) {
        return Err(Error::invalid("time unit must be positive"));
    }
    let mut nodes: Vec<RegionNode> = Vec::new();
    let mut partitions = Vec::new();
    let mut stack = vec![Pending {
        log: log.clone(),
        map: TimeMap::identity(log.horizon()),
        parent: None,
        depth: 0,
        branch: Branch::Root,
    }];
    let mut root_cmp: Option<BicComparison> = None;
    let mut reasons: Vec<String> = Vec::new();
    while let Some(p) = stack.pop() {
        let id = nodes.len();
        let region = p.map.original_intervals(0.0, p.log.horizon());
        let mut node = RegionNode {
            id,
            parent: p.parent,
            depth: p.depth,
            branch: p.branch,
            region,
            events: p.log.len(),
            lambda: None,
            comparison: None,
            outcome: String::new(),
        };
        let seed: u64 = rng.random();
        if p.log.is_empty() || (p.branch != Branch::Root && p.log.len() < cfg.floor) {
            node.outcome = format!("below event floor ({} < {})", p.log.len(), cfg.floor);
            if p.branch == Branch::Root {
                root_cmp = Some(compare(log.k(), 0, 0.0, 0.0));
                node.outcome = "root homogeneous".into();
            }
            reasons.push(node.outcome.clone());
            nodes.push(node);
            continue;
        }
        let lambda = fix_lambda(&p.log, unit)?;
        node.lambda = Some(lambda);
        let mut node_rng = ChaCha8Rng::seed_from_u64(seed);
        let hom = fit_homogeneous(&p.log, lambda, em)?;
        let het = fit(&p.log, lambda, em, init, None, &mut node_rng)?;
        let cmp = compare(p.log.k(), p.log.len(), hom.loglik, het.loglik);
        node.comparison = Some(cmp);
        if p.branch == Branch::Root {
            root_cmp = Some(cmp);
        }
        if cmp.decision == Decision::Homogeneous {
            node.outcome = if p.branch == Branch::Root { "root homogeneous".into() } else { "homogeneous".into() };
            reasons.push(node.outcome.clone());
            nodes.push(node);
            continue;
        }
        let w = het.model.window;
        let repeats_parent = p.parent.is_some_and(|parent| {
            partitions.iter().any(|q: &AcceptedPartition| {
                q.node == parent
                    && (q.model.subset == het.model.subset || q.model.subset == het.model.subset.complement())
            })
        });
        partitions.push(AcceptedPartition {
            node: id,
            model: het.model.clone(),
            window: p.map.original_intervals(w.start, w.end),
            loglik_het: het.loglik,
            loglik_hom: hom.loglik,
            delta_bic: cmp.delta(),
            membership: het.membership.clone(),
            iterations: het.iterations,
            converged: het.converged,
            repeats_parent,
        });
        if p.depth >= cfg.max_depth {
            node.outcome = format!("accepted; max depth {} reached", cfg.max_depth);
            reasons.push(format!("max depth {} reached", cfg.max_depth));
            nodes.push(node);
            continue;
        }
        node.outcome = "accepted".into();
        nodes.push(node);
        let inside = Pending {
            log: splice_inside(&p.log, w.start, w.end)?,
            map: p.map.inside(w.start, w.end),
            parent: Some(id),
            depth: p.depth + 1,
            branch: Branch::Inside,
        };
        let outside = Pending {
            log: splice_outside(&p.log, w.start, w.end)?,
            map: p.map.outside(w.start, w.end, p.log.horizon()),
            parent: Some(id),
            depth: p.depth + 1,
            branch: Branch::Outside,
        };
        // Popped in reverse: outside first.
        stack.push(inside);
        stack.push(outside);
    }
    let root = root_cmp.expect("root node always examined");
    reasons.sort();
    reasons.dedup();
    let stopped_reason =
        if root.decision == Decision::Homogeneous { "root homogeneous".to_string() } else { reasons.join("; ") };
    Ok(SelectionReport {
        bic_hom: root.bic_hom,
        bic_het: root.bic_het,
        decision: root.decision,
        partitions,
        nodes,
        stopped_reason,
    })
}
