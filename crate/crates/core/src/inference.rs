//! The assembly problem over joint proposals and its solvers.
//!
//! A solution selects a subset of proposals and partitions the selection into
//! people, with at most one proposal of each joint type per person. The cost
//! is the sum of unary costs of selected proposals plus pair costs of every
//! same-person pair.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::body::{JointType, NUM_JOINTS};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::pairwise::{pair_feature, pair_probability, JointPartAssociation, LogisticModel};
use crate::proposals::{JointProposal, ZoomedRegion};
use crate::tensor::LabelMap;

pub const PROB_EPS: f64 = 1e-6;
/// Objective improvements smaller than this are treated as ties.
const IMPROVE_EPS: f64 = 1e-12;

/// `ln((1 - p) / p)` with `p` clamped away from 0 and 1.
pub fn log_odds_cost(p: f64) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    ((1.0 - p) / p).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssemblyProblem {
    pub nodes: Vec<JointProposal>,
    pub unary: Vec<f64>,
    /// Row-major `n x n`, symmetric, zero diagonal.
    pair_cost: Vec<f64>,
}

impl AssemblyProblem {
    pub fn new(nodes: Vec<JointProposal>, unary: Vec<f64>, pair_cost: Vec<f64>) -> Result<Self> {
        let n = nodes.len();
        if unary.len() != n || pair_cost.len() != n * n {
            return Err(Error::argument(format!(
                "{n} nodes need {n} unaries and {} pair costs",
                n * n
            )));
        }
        if unary.iter().chain(&pair_cost).any(|v| !v.is_finite()) {
            return Err(Error::argument("costs must be finite"));
        }
        for i in 0..n {
            if pair_cost[i * n + i] != 0.0 {
                return Err(Error::argument("pair cost diagonal must be zero"));
            }
            for j in 0..i {
                if pair_cost[i * n + j] != pair_cost[j * n + i] {
                    return Err(Error::argument("pair costs must be symmetric"));
                }
            }
        }
        Ok(AssemblyProblem {
            nodes,
            unary,
            pair_cost,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn cost(&self, i: usize, j: usize) -> f64 {
        self.pair_cost[i * self.len() + j]
    }

    pub fn node_type(&self, i: usize) -> JointType {
        self.nodes[i].joint_type
    }

    fn type_bit(&self, i: usize) -> u16 {
        1 << self.node_type(i).index()
    }

    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Dump<'a> {
            nodes: &'a [JointProposal],
            unary: &'a [f64],
            pair_cost: Vec<&'a [f64]>,
        }
        let n = self.len().max(1);
        Ok(serde_json::to_string_pretty(&Dump {
            nodes: &self.nodes,
            unary: &self.unary,
            pair_cost: self.pair_cost.chunks(n).collect(),
        })?)
    }
}

/// Builds the problem for one region's proposals.
pub fn build_problem(
    region: &ZoomedRegion<'_>,
    proposals: &[JointProposal],
    model: &LogisticModel,
    assoc: &JointPartAssociation,
    labels: &LabelMap,
    use_segment: bool,
) -> Result<AssemblyProblem> {
    let n = proposals.len();
    let unary = proposals.iter().map(|p| log_odds_cost(p.score)).collect();
    let mut pair = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (&proposals[i], &proposals[j]);
            let f = pair_feature(region, labels, assoc, a, b, use_segment)?;
            let c = log_odds_cost(pair_probability(model, &f, a.joint_type, b.joint_type)?);
            pair[i * n + j] = c;
            pair[j * n + i] = c;
        }
    }
    AssemblyProblem::new(proposals.to_vec(), unary, pair)
}

/// Random instance for solver testing: a handful of joint types so that the
/// one-per-type rule binds.
pub fn random_problem(n: usize, seed: u64) -> AssemblyProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_types = rng.random_range(2..=5usize);
    let nodes: Vec<JointProposal> = (0..n)
        .map(|_| JointProposal {
            location: Point::new(rng.random_range(0.0..100.0), rng.random_range(0.0..100.0)),
            joint_type: JointType::ALL[rng.random_range(0..n_types)],
            score: rng.random_range(0.05..0.95),
        })
        .collect();
    let unary = nodes.iter().map(|p| log_odds_cost(p.score)).collect();
    let mut pair = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let c = log_odds_cost(rng.random_range(0.02..0.98));
            pair[i * n + j] = c;
            pair[j * n + i] = c;
        }
    }
    AssemblyProblem::new(nodes, unary, pair).expect("valid by construction")
}

/// Per-node label (`0` unselected, otherwise joint type + 1) and person id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Labeling {
    pub node_label: Vec<u8>,
    pub cluster: Vec<Option<usize>>,
}

impl Labeling {
    pub fn empty(n: usize) -> Self {
        Labeling {
            node_label: vec![0; n],
            cluster: vec![None; n],
        }
    }

    fn from_assignment(p: &AssemblyProblem, assign: &[Option<usize>]) -> Self {
        let mut remap: Vec<Option<usize>> = Vec::new();
        let mut next = 0;
        let mut cluster = vec![None; assign.len()];
        let mut node_label = vec![0u8; assign.len()];
        for (i, a) in assign.iter().enumerate() {
            if let Some(c) = *a {
                if remap.len() <= c {
                    remap.resize(c + 1, None);
                }
                let id = *remap[c].get_or_insert_with(|| {
                    next += 1;
                    next - 1
                });
                cluster[i] = Some(id);
                node_label[i] = p.node_type(i).index() as u8 + 1;
            }
        }
        Labeling { node_label, cluster }
    }

    pub fn is_selected(&self, i: usize) -> bool {
        self.node_label[i] != 0
    }

    pub fn same_person(&self, i: usize, j: usize) -> bool {
        self.cluster[i].is_some() && self.cluster[i] == self.cluster[j]
    }

    /// Member lists ordered by cluster id.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let k = self.cluster.iter().flatten().map(|&c| c + 1).max().unwrap_or(0);
        let mut out = vec![Vec::new(); k];
        for (i, c) in self.cluster.iter().enumerate() {
            if let Some(c) = c {
                out[*c].push(i);
            }
        }
        out.retain(|m| !m.is_empty());
        out
    }

    pub fn validate(&self, p: &AssemblyProblem) -> Result<()> {
        let n = p.len();
        if self.node_label.len() != n || self.cluster.len() != n {
            return Err(Error::argument(format!("labeling size does not match {n} nodes")));
        }
        for i in 0..n {
            let want = p.node_type(i).index() as u8 + 1;
            match (self.node_label[i], self.cluster[i]) {
                (0, None) => {}
                (l, Some(_)) if l == want => {}
                (l, c) => {
                    return Err(Error::argument(format!(
                        "node {i}: label {l} with cluster {c:?} is not allowed"
                    )))
                }
            }
        }
        for members in self.clusters() {
            let mut seen = 0u16;
            for i in members {
                let bit = p.type_bit(i);
                if seen & bit != 0 {
                    return Err(Error::argument(format!("two {} joints in one person", p.node_type(i))));
                }
                seen |= bit;
            }
        }
        Ok(())
    }
}

pub fn objective(p: &AssemblyProblem, l: &Labeling) -> Result<f64> {
    l.validate(p)?;
    let n = p.len();
    let mut total = 0.0;
    for i in 0..n {
        if !l.is_selected(i) {
            continue;
        }
        total += p.unary[i];
        for j in i + 1..n {
            if l.same_person(i, j) {
                total += p.cost(i, j);
            }
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SolverMode {
    Exact,
    #[default]
    Heuristic,
    Oracle,
}

impl std::str::FromStr for SolverMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(SolverMode::Exact),
            "heuristic" => Ok(SolverMode::Heuristic),
            "oracle" => Ok(SolverMode::Oracle),
            other => Err(Error::argument(format!("unknown solver mode {other:?}"))),
        }
    }
}

pub const ORACLE_NODE_LIMIT: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub mode: SolverMode,
    pub exact_node_limit: usize,
    pub restarts: usize,
    pub move_cap: usize,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            mode: SolverMode::Heuristic,
            exact_node_limit: 12,
            restarts: 8,
            move_cap: 10_000,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.exact_node_limit == 0 || self.move_cap == 0 {
            return Err(Error::argument("solver limits must be positive"));
        }
        Ok(())
    }
}

pub fn solve(p: &AssemblyProblem, cfg: &SolverConfig) -> Result<Labeling> {
    cfg.validate()?;
    log::trace!("solving {} nodes in {:?} mode", p.len(), cfg.mode);
    match cfg.mode {
        SolverMode::Exact => solve_exact(p, cfg.exact_node_limit),
        SolverMode::Heuristic => Ok(solve_heuristic(p, cfg)),
        SolverMode::Oracle => solve_oracle(p),
    }
}

/// Partial assignment shared by the enumerating solvers.
struct Search<'a> {
    p: &'a AssemblyProblem,
    assign: Vec<Option<usize>>,
    masks: Vec<u16>,
    members: Vec<Vec<usize>>,
    best: f64,
    best_assign: Vec<Option<usize>>,
    prune: bool,
}

impl<'a> Search<'a> {
    fn new(p: &'a AssemblyProblem, prune: bool) -> Self {
        Search {
            p,
            assign: vec![None; p.len()],
            masks: Vec::new(),
            members: Vec::new(),
            best: 0.0,
            best_assign: vec![None; p.len()],
            prune,
        }
    }

    /// Lower bound on what nodes `k..` can still add.
    fn bound(&self, k: usize) -> f64 {
        let p = self.p;
        let n = p.len();
        let mut total = 0.0;
        for r in k..n {
            let mut best = p.unary[r];
            for j in 0..n {
                if j == r || (j < k && self.assign[j].is_none()) || (j >= k && j < r) {
                    continue;
                }
                best += p.cost(r, j).min(0.0);
            }
            total += best.min(0.0);
        }
        total
    }

    fn recurse(&mut self, k: usize, value: f64) {
        let p = self.p;
        if k == p.len() {
            if value < self.best - IMPROVE_EPS || (!self.prune && value < self.best) {
                self.best = value;
                self.best_assign.clone_from(&self.assign);
            }
            return;
        }
        if self.prune && value + self.bound(k) >= self.best - IMPROVE_EPS {
            return;
        }
        let bit = p.type_bit(k);
        let mut options: Vec<(f64, Option<usize>)> = vec![(0.0, None)];
        for c in 0..self.members.len() {
            if self.masks[c] & bit == 0 {
                let delta = p.unary[k] + self.members[c].iter().map(|&j| p.cost(k, j)).sum::<f64>();
                options.push((delta, Some(c)));
            }
        }
        options.push((p.unary[k], Some(self.members.len())));
        if self.prune {
            options.sort_by(|a, b| a.0.total_cmp(&b.0));
        }
        for (delta, choice) in options {
            match choice {
                None => self.recurse(k + 1, value),
                Some(c) => {
                    if c == self.members.len() {
                        self.members.push(Vec::new());
                        self.masks.push(0);
                    }
                    self.members[c].push(k);
                    self.masks[c] |= bit;
                    self.assign[k] = Some(c);
                    self.recurse(k + 1, value + delta);
                    self.assign[k] = None;
                    self.masks[c] &= !bit;
                    self.members[c].pop();
                    if self.members[c].is_empty() && c + 1 == self.members.len() {
                        self.members.pop();
                        self.masks.pop();
                    }
                }
            }
        }
    }
}

/// Branch and bound over per-node decisions; provably optimal.
pub fn solve_exact(p: &AssemblyProblem, node_limit: usize) -> Result<Labeling> {
    if p.len() > node_limit {
        return Err(Error::Capacity(format!(
            "exact solver limited to {node_limit} nodes, got {}",
            p.len()
        )));
    }
    let seed = solve_heuristic(
        p,
        &SolverConfig {
            restarts: 0,
            ..Default::default()
        },
    );
    let mut s = Search::new(p, true);
    s.best = objective(p, &seed).expect("heuristic output is feasible");
    s.best_assign = seed.cluster.clone();
    s.recurse(0, 0.0);
    Ok(Labeling::from_assignment(p, &s.best_assign))
}

/// Exhaustive enumeration of every feasible labeling.
pub fn solve_oracle(p: &AssemblyProblem) -> Result<Labeling> {
    if p.len() > ORACLE_NODE_LIMIT {
        return Err(Error::Capacity(format!(
            "oracle limited to {ORACLE_NODE_LIMIT} nodes, got {}",
            p.len()
        )));
    }
    let mut s = Search::new(p, false);
    s.recurse(0, 0.0);
    Ok(Labeling::from_assignment(p, &s.best_assign))
}

/// Mutable clustering state for local search.
#[derive(Clone)]
struct State {
    assign: Vec<Option<usize>>,
    masks: Vec<u16>,
    sizes: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
enum Move {
    Unselect(usize),
    /// Node to cluster; `None` opens a new cluster.
    Place(usize, Option<usize>),
    Merge(usize, usize),
}

impl State {
    fn empty(n: usize) -> Self {
        State {
            assign: vec![None; n],
            masks: Vec::new(),
            sizes: Vec::new(),
        }
    }

    fn new_cluster(&mut self) -> usize {
        if let Some(c) = self.sizes.iter().position(|&s| s == 0) {
            return c;
        }
        self.sizes.push(0);
        self.masks.push(0);
        self.sizes.len() - 1
    }

    fn remove(&mut self, p: &AssemblyProblem, i: usize) {
        if let Some(c) = self.assign[i].take() {
            self.sizes[c] -= 1;
            self.masks[c] &= !p.type_bit(i);
        }
    }

    fn place(&mut self, p: &AssemblyProblem, i: usize, c: usize) {
        self.remove(p, i);
        self.assign[i] = Some(c);
        self.sizes[c] += 1;
        self.masks[c] |= p.type_bit(i);
    }

    fn apply(&mut self, p: &AssemblyProblem, m: Move) {
        match m {
            Move::Unselect(i) => self.remove(p, i),
            Move::Place(i, Some(c)) => self.place(p, i, c),
            Move::Place(i, None) => {
                self.remove(p, i);
                let c = self.new_cluster();
                self.place(p, i, c);
            }
            Move::Merge(a, b) => {
                for i in 0..p.len() {
                    if self.assign[i] == Some(b) {
                        self.place(p, i, a);
                    }
                }
            }
        }
    }

    fn value(&self, p: &AssemblyProblem) -> f64 {
        let n = p.len();
        let mut total = 0.0;
        for i in 0..n {
            if let Some(c) = self.assign[i] {
                total += p.unary[i];
                for j in i + 1..n {
                    if self.assign[j] == Some(c) {
                        total += p.cost(i, j);
                    }
                }
            }
        }
        total
    }

    /// Best strictly improving move, first in enumeration order on ties.
    fn best_move(&self, p: &AssemblyProblem) -> Option<(f64, Move)> {
        let n = p.len();
        let k = self.sizes.len();
        // link[i][c]: summed pair cost between node i and the members of cluster c.
        let mut link = vec![0.0; n * k];
        for i in 0..n {
            for j in 0..n {
                if let Some(c) = self.assign[j] {
                    if j != i {
                        link[i * k + c] += p.cost(i, j);
                    }
                }
            }
        }
        let mut best: Option<(f64, Move)> = None;
        let mut consider = |delta: f64, m: Move| {
            if delta < -IMPROVE_EPS && best.is_none_or(|(d, _)| delta < d) {
                best = Some((delta, m));
            }
        };
        for i in 0..n {
            let bit = p.type_bit(i);
            let leave = match self.assign[i] {
                Some(c) => {
                    let out = p.unary[i] + link[i * k + c];
                    consider(-out, Move::Unselect(i));
                    out
                }
                None => 0.0,
            };
            for c in 0..k {
                if self.sizes[c] == 0 || self.assign[i] == Some(c) || self.masks[c] & bit != 0 {
                    continue;
                }
                consider(p.unary[i] + link[i * k + c] - leave, Move::Place(i, Some(c)));
            }
            let alone = self.assign[i].is_some_and(|c| self.sizes[c] == 1);
            if !alone {
                consider(p.unary[i] - leave, Move::Place(i, None));
            }
        }
        for a in 0..k {
            for b in a + 1..k {
                if self.sizes[a] == 0 || self.sizes[b] == 0 || self.masks[a] & self.masks[b] != 0 {
                    continue;
                }
                let delta: f64 = (0..n)
                    .filter(|&i| self.assign[i] == Some(b))
                    .map(|i| link[i * k + a])
                    .sum();
                consider(delta, Move::Merge(a, b));
            }
        }
        best
    }

    /// Applies best moves until none improves or `cap` moves were made.
    fn descend(&mut self, p: &AssemblyProblem, cap: usize) -> usize {
        let mut moves = 0;
        while moves < cap {
            match self.best_move(p) {
                Some((_, m)) => {
                    self.apply(p, m);
                    moves += 1;
                }
                None => break,
            }
        }
        moves
    }
}

/// Greedy start plus best-improvement local search with seeded restarts.
pub fn solve_heuristic(p: &AssemblyProblem, cfg: &SolverConfig) -> Labeling {
    let n = p.len();
    let mut state = State::empty(n);
    for i in 0..n {
        if p.unary[i] < 0.0 {
            let c = state.new_cluster();
            state.place(p, i, c);
        }
    }
    let mut budget = cfg.move_cap;
    budget -= state.descend(p, budget);
    let mut best_value = state.value(p);
    let mut best = state;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.restarts {
        if budget == 0 || n == 0 {
            break;
        }
        let mut s = best.clone();
        for i in 0..n {
            if !rng.random_bool(0.3) {
                continue;
            }
            let bit = p.type_bit(i);
            let open: Vec<usize> = (0..s.sizes.len())
                .filter(|&c| s.sizes[c] > 0 && s.masks[c] & bit == 0)
                .collect();
            match rng.random_range(0..3u8) {
                0 => s.remove(p, i),
                1 if !open.is_empty() => {
                    let c = open[rng.random_range(0..open.len())];
                    s.place(p, i, c);
                }
                _ => s.apply(p, Move::Place(i, None)),
            }
        }
        budget -= s.descend(p, budget);
        let v = s.value(p);
        if v < best_value - IMPROVE_EPS {
            best_value = v;
            best = s;
        }
    }
    Labeling::from_assignment(p, &best.assign)
}

/// True when no single move of the local search improves `l`.
pub fn is_local_optimum(p: &AssemblyProblem, l: &Labeling) -> bool {
    let mut s = State::empty(p.len());
    for (i, c) in l.cluster.iter().enumerate() {
        if let Some(c) = *c {
            while s.sizes.len() <= c {
                s.sizes.push(0);
                s.masks.push(0);
            }
            s.place(p, i, c);
        }
    }
    s.best_move(p).is_none()
}

/// Joint types present per cluster, for callers that assemble poses.
pub fn cluster_types(p: &AssemblyProblem, members: &[usize]) -> [Option<usize>; NUM_JOINTS] {
    let mut out = [None; NUM_JOINTS];
    for &i in members {
        out[p.node_type(i).index()] = Some(i);
    }
    out
}
