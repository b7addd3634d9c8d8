//! One-to-one matching of predicted events to annotated swallow starts.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TOLERANCE: usize = 400;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// `|p - y| <= d/2`: the prediction targets the swallow start.
    #[default]
    StartCentered,
    /// `y <= p <= y + d`: the prediction marks a point during the swallow.
    EventForward,
    /// `y - d/4 <= p <= y + 3d/4`.
    EventAsymmetric,
}

impl MatchMode {
    pub fn name(self) -> &'static str {
        match self {
            Self::StartCentered => "start_centered",
            Self::EventForward => "event_forward",
            Self::EventAsymmetric => "event_asymmetric",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [Self::StartCentered, Self::EventForward, Self::EventAsymmetric]
            .into_iter()
            .find(|m| m.name() == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MatchConfig {
    pub d: usize,
    pub mode: MatchMode,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            d: DEFAULT_TOLERANCE,
            mode: MatchMode::StartCentered,
        }
    }
}

impl MatchConfig {
    pub fn new(d: usize, mode: MatchMode) -> Result<Self> {
        let cfg = MatchConfig { d, mode };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::param("d", "must be positive"));
        }
        Ok(())
    }

    /// Whether a prediction at `p` may match the truth at `y`. Bounds are
    /// inclusive and evaluated in exact integer arithmetic.
    pub fn eligible(&self, y: usize, p: usize) -> bool {
        let diff = p as i128 - y as i128;
        let d = self.d as i128;
        match self.mode {
            MatchMode::StartCentered => 2 * diff.abs() <= d,
            MatchMode::EventForward => (0..=d).contains(&diff),
            MatchMode::EventAsymmetric => (-d..=3 * d).contains(&(4 * diff)),
        }
    }

    /// Offsets `p - y` that may be eligible, as a closed range.
    fn offset_bounds(&self) -> (i128, i128) {
        let d = self.d as i128;
        match self.mode {
            MatchMode::StartCentered => (-(d / 2), d / 2),
            MatchMode::EventForward => (0, d),
            MatchMode::EventAsymmetric => (-d.div_euclid(4), (3 * d).div_euclid(4)),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchOutcome {
    /// `(truth index, prediction index)` into the input slices.
    pub pairs: Vec<(usize, usize)>,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    /// `p - y` for every matched pair, in pair order.
    pub distances: Vec<i64>,
}

fn check_sorted(name: &'static str, v: &[usize]) -> Result<()> {
    if v.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::param(name, "must be sorted ascending"));
    }
    Ok(())
}

/// Greedy matching: eligible pairs are accepted in order of increasing
/// `|p - y|` (then smaller `y`, then smaller `p`) when both ends are free.
///
/// Plain greedy can strand a truth whose only candidate was taken by a
/// closer pair. Within each group of mutually reachable events the greedy
/// pass is therefore kept only when it reaches the maximum number of matches;
/// otherwise a pair is accepted only if the maximum stays attainable.
/// Whenever plain greedy is already maximal the two agree exactly.
pub fn match_events(truth: &[usize], predicted: &[usize], cfg: &MatchConfig) -> Result<MatchOutcome> {
    cfg.validate()?;
    check_sorted("true_starts", truth)?;
    check_sorted("predicted", predicted)?;
    let (lo, hi) = cfg.offset_bounds();

    let mut candidates: Vec<(u128, usize, usize)> = Vec::new();
    for (ti, &y) in truth.iter().enumerate() {
        let from = (y as i128 + lo).max(0) as usize;
        let first = predicted.partition_point(|&p| p < from);
        for (pi, &p) in predicted.iter().enumerate().skip(first) {
            if p as i128 > y as i128 + hi {
                break;
            }
            if cfg.eligible(y, p) {
                candidates.push(((p as i128 - y as i128).unsigned_abs(), ti, pi));
            }
        }
    }
    candidates.sort_unstable_by(|a, b| {
        a.0.cmp(&b.0)
            .then(truth[a.1].cmp(&truth[b.1]))
            .then(predicted[a.2].cmp(&predicted[b.2]))
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });

    let pairs = select_pairs(&candidates, truth.len(), predicted.len());
    let distances = pairs
        .iter()
        .map(|&(ti, pi)| predicted[pi] as i64 - truth[ti] as i64)
        .collect();
    let tp = pairs.len();
    Ok(MatchOutcome {
        tp,
        fp: predicted.len() - tp,
        fn_: truth.len() - tp,
        pairs,
        distances,
    })
}

fn select_pairs(candidates: &[(u128, usize, usize)], n_truth: usize, n_pred: usize) -> Vec<(usize, usize)> {
    // Union-find over truths `0..n_truth` and predictions `n_truth..`.
    let mut parent: Vec<usize> = (0..n_truth + n_pred).collect();
    fn root(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &(_, t, p) in candidates {
        let (a, b) = (root(&mut parent, t), root(&mut parent, n_truth + p));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut groups: Vec<(usize, Vec<(usize, usize)>)> = Vec::new();
    for &(_, t, p) in candidates {
        let r = root(&mut parent, t);
        match groups.iter_mut().find(|(g, _)| *g == r) {
            Some((_, pairs)) => pairs.push((t, p)),
            None => groups.push((r, alloc::vec![(t, p)])),
        }
    }

    let mut truth_used = alloc::vec![false; n_truth];
    let mut pred_used = alloc::vec![false; n_pred];
    let mut out = Vec::new();
    for (_, group) in groups {
        let greedy = greedy_pass(&group, &mut truth_used.clone(), &mut pred_used.clone());
        let target = Component::new(&group).max_matching(&[], &[]);
        let chosen = if greedy.len() == target {
            greedy
        } else {
            constrained_pass(&group, target)
        };
        for &(t, p) in &chosen {
            truth_used[t] = true;
            pred_used[p] = true;
        }
        out.extend(chosen);
    }
    // Report pairs in the global greedy order.
    let rank = |pair: &(usize, usize)| candidates.iter().position(|&(_, t, p)| (t, p) == *pair);
    out.sort_by_key(rank);
    out
}

fn greedy_pass(group: &[(usize, usize)], truth_used: &mut [bool], pred_used: &mut [bool]) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for &(t, p) in group {
        if !truth_used[t] && !pred_used[p] {
            truth_used[t] = true;
            pred_used[p] = true;
            pairs.push((t, p));
        }
    }
    pairs
}

fn constrained_pass(group: &[(usize, usize)], target: usize) -> Vec<(usize, usize)> {
    let comp = Component::new(group);
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for &(t, p) in group {
        if pairs.iter().any(|&(a, b)| a == t || b == p) {
            continue;
        }
        pairs.push((t, p));
        let ts: Vec<usize> = pairs.iter().map(|x| x.0).collect();
        let ps: Vec<usize> = pairs.iter().map(|x| x.1).collect();
        if pairs.len() + comp.max_matching(&ts, &ps) < target {
            pairs.pop();
        }
    }
    pairs
}

/// Bipartite graph of one connected group, for augmenting-path matching.
struct Component {
    truths: Vec<usize>,
    preds: Vec<usize>,
    /// Local truth index to local prediction indices.
    adj: Vec<Vec<usize>>,
}

impl Component {
    fn new(group: &[(usize, usize)]) -> Self {
        let mut truths: Vec<usize> = group.iter().map(|x| x.0).collect();
        let mut preds: Vec<usize> = group.iter().map(|x| x.1).collect();
        truths.sort_unstable();
        truths.dedup();
        preds.sort_unstable();
        preds.dedup();
        let mut adj = alloc::vec![Vec::new(); truths.len()];
        for &(t, p) in group {
            let lt = truths.binary_search(&t).unwrap_or_default();
            let lp = preds.binary_search(&p).unwrap_or_default();
            adj[lt].push(lp);
        }
        Component { truths, preds, adj }
    }

    /// Maximum matching size with the given global truths and predictions removed.
    fn max_matching(&self, removed_truths: &[usize], removed_preds: &[usize]) -> usize {
        let pred_free: Vec<bool> = self.preds.iter().map(|p| !removed_preds.contains(p)).collect();
        let mut owner = alloc::vec![usize::MAX; self.preds.len()];
        let mut count = 0;
        for (lt, t) in self.truths.iter().enumerate() {
            if removed_truths.contains(t) {
                continue;
            }
            let mut seen = alloc::vec![false; self.preds.len()];
            if self.augment(lt, &pred_free, &mut owner, &mut seen) {
                count += 1;
            }
        }
        count
    }

    fn augment(&self, lt: usize, pred_free: &[bool], owner: &mut [usize], seen: &mut [bool]) -> bool {
        for &lp in &self.adj[lt] {
            if !pred_free[lp] || seen[lp] {
                continue;
            }
            seen[lp] = true;
            if owner[lp] == usize::MAX || self.augment(owner[lp], pred_free, owner, seen) {
                owner[lp] = lt;
                return true;
            }
        }
        false
    }
}
