//! Cayley graphs of a projective group representation and their Euler cycles.

use std::collections::{BTreeMap, VecDeque};

use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix};
use crate::model::{build_cycle, Cycle, CycleKind, DecouplingSet, PHASE_MATCH_TOL};
use crate::pulses::PulsePath;

/// `source --γ--> target` with `v_target γ ∝ v_source`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct CayleyEdge {
    pub source: usize,
    /// Position in [`CayleyGraph::generators`].
    pub generator: usize,
    pub target: usize,
}

#[derive(Debug, Clone)]
pub struct CayleyGraph {
    vertex_count: usize,
    identity: usize,
    generators: Vec<usize>,
    edges: Vec<CayleyEdge>,
    /// Outgoing edge indices per vertex, ascending by (generator, target).
    outgoing: Vec<Vec<usize>>,
}

impl CayleyGraph {
    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    /// Element index of the identity vertex.
    pub fn identity(&self) -> usize {
        self.identity
    }

    /// Generator element indices into the decoupling set.
    pub fn generators(&self) -> &[usize] {
        &self.generators
    }

    pub fn edges(&self) -> &[CayleyEdge] {
        &self.edges
    }

    pub fn outgoing(&self, v: usize) -> &[usize] {
        &self.outgoing[v]
    }

    fn edge_from(&self, source: usize, generator: usize) -> usize {
        self.outgoing[source]
            .iter()
            .copied()
            .find(|&e| self.edges[e].generator == generator)
            .expect("every vertex has one outgoing edge per generator")
    }
}

/// Builds the Cayley graph of `set` with the given generator element indices.
pub fn build_cayley(set: &DecouplingSet, generators: &[usize]) -> Result<CayleyGraph> {
    if generators.is_empty() {
        return Err(Error::Validation("generator list is empty".into()));
    }
    let n = set.len();
    if let Some(&bad) = generators.iter().find(|&&g| g >= n) {
        return Err(Error::Validation(format!(
            "generator index {bad} outside a set of {n} elements"
        )));
    }
    let mut sorted = generators.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != generators.len() {
        return Err(Error::Validation(
            "generator list contains duplicates".into(),
        ));
    }
    let identity = set
        .find_up_to_phase(&ComplexMatrix::identity(set.space().dim_s()))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::Validation("decoupling set does not contain the identity".into()))?;

    let elements = set.elements();
    let mut edges = Vec::with_capacity(n * generators.len());
    for (source, v) in elements.iter().enumerate() {
        for (gi, &g) in generators.iter().enumerate() {
            let product = v * &elements[g].adjoint();
            let (target, _) = set.find_up_to_phase(&product).ok_or_else(|| {
                Error::Validation(format!(
                    "element {source} times the inverse of generator {g} is not in the set up to phase"
                ))
            })?;
            edges.push(CayleyEdge {
                source,
                generator: gi,
                target,
            });
        }
    }
    let mut outgoing = vec![Vec::new(); n];
    for (i, e) in edges.iter().enumerate() {
        outgoing[e.source].push(i);
    }
    for out in &mut outgoing {
        out.sort_by_key(|&i| (edges[i].generator, edges[i].target));
    }
    let graph = CayleyGraph {
        vertex_count: n,
        identity,
        generators: generators.to_vec(),
        edges,
        outgoing,
    };
    check_balanced(&graph)?;
    check_strongly_connected(&graph)?;
    Ok(graph)
}

fn check_balanced(g: &CayleyGraph) -> Result<()> {
    let mut indegree = vec![0usize; g.vertex_count];
    for e in &g.edges {
        indegree[e.target] += 1;
    }
    let k = g.generators.len();
    if let Some((v, &d)) = indegree.iter().enumerate().find(|(_, &d)| d != k) {
        return Err(Error::Validation(format!(
            "vertex {v} has {d} incoming edges, expected {k}; the set is not closed under the generators"
        )));
    }
    Ok(())
}

fn reachable(g: &CayleyGraph, start: usize, reverse: bool) -> Vec<bool> {
    let mut adj = vec![Vec::new(); g.vertex_count];
    for e in &g.edges {
        if reverse {
            adj[e.target].push(e.source);
        } else {
            adj[e.source].push(e.target);
        }
    }
    let mut seen = vec![false; g.vertex_count];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    seen
}

fn check_strongly_connected(g: &CayleyGraph) -> Result<()> {
    for reverse in [false, true] {
        if let Some(v) = reachable(g, g.identity, reverse).iter().position(|&s| !s) {
            return Err(Error::Validation(format!(
                "generators do not generate the set: element {v} is unreachable"
            )));
        }
    }
    Ok(())
}

/// A closed walk through every edge exactly once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EulerCycle {
    pub edge_sequence: Vec<usize>,
    /// `v_k` is the target of the `k`-th edge; the last entry is the identity.
    pub induced_visits: Vec<usize>,
}

/// Hierholzer's algorithm from `start`, then gauge-fixed so the walk ends at the identity.
pub fn euler_cycle(g: &CayleyGraph, set: &DecouplingSet, start: usize) -> Result<EulerCycle> {
    if start >= g.vertex_count {
        return Err(Error::Validation(format!(
            "start vertex {start} out of range"
        )));
    }
    let mut next = vec![0usize; g.vertex_count];
    let mut stack: Vec<(usize, Option<usize>)> = vec![(start, None)];
    let mut circuit = Vec::with_capacity(g.edges.len());
    while let Some(&(v, via)) = stack.last() {
        if next[v] < g.outgoing[v].len() {
            let e = g.outgoing[v][next[v]];
            next[v] += 1;
            stack.push((g.edges[e].target, Some(e)));
        } else {
            stack.pop();
            if let Some(e) = via {
                circuit.push(e);
            }
        }
    }
    circuit.reverse();

    let cycle = if start == g.identity {
        circuit
    } else {
        // Relabel v -> w* v with w = v_start; generators and hence pulses are unchanged.
        let w_adj = set.elements()[start].adjoint();
        let relabel: Vec<usize> = set
            .elements()
            .iter()
            .map(|v| {
                set.find_up_to_phase(&(&w_adj * v))
                    .map(|(i, _)| i)
                    .ok_or_else(|| {
                        Error::Validation("set is not closed under left multiplication".into())
                    })
            })
            .collect::<Result<_>>()?;
        circuit
            .iter()
            .map(|&e| g.edge_from(relabel[g.edges[e].source], g.edges[e].generator))
            .collect()
    };
    let induced_visits = cycle.iter().map(|&e| g.edges[e].target).collect();
    let out = EulerCycle {
        edge_sequence: cycle,
        induced_visits,
    };
    validate_euler_cycle(g, &out)?;
    Ok(out)
}

/// Each edge once, consecutive edges chained, walk closed and ending at the identity.
pub fn validate_euler_cycle(g: &CayleyGraph, e: &EulerCycle) -> Result<()> {
    let seq = &e.edge_sequence;
    if seq.len() != g.edges.len() {
        return Err(Error::Validation(format!(
            "walk has {} edges, graph has {}",
            seq.len(),
            g.edges.len()
        )));
    }
    let mut used = vec![false; g.edges.len()];
    for &i in seq {
        if i >= used.len() || used[i] {
            return Err(Error::Validation(format!("edge {i} missing or repeated")));
        }
        used[i] = true;
    }
    for k in 0..seq.len() {
        let here = g.edges[seq[k]];
        let after = g.edges[seq[(k + 1) % seq.len()]];
        if here.target != after.source {
            return Err(Error::Validation(format!("walk breaks after edge {k}")));
        }
    }
    if e.induced_visits.len() != seq.len()
        || e.induced_visits
            .iter()
            .zip(seq)
            .any(|(&v, &i)| g.edges[i].target != v)
    {
        return Err(Error::Validation(
            "visits do not follow the edge sequence".into(),
        ));
    }
    if e.induced_visits.last() != Some(&g.identity) {
        return Err(Error::Validation(
            "walk does not end at the identity".into(),
        ));
    }
    Ok(())
}

/// The decoupling cycle of an Euler walk with one pulse path per generator.
///
/// Step `k` uses the path of its edge label, multiplied by the scalar phase that
/// makes it end exactly at the cycle's `γ_k`.
pub fn to_cycle(
    e: &EulerCycle,
    g: &CayleyGraph,
    set: &DecouplingSet,
    pulses_per_generator: &BTreeMap<usize, PulsePath>,
) -> Result<(Cycle, Vec<PulsePath>)> {
    validate_euler_cycle(g, e)?;
    let cycle = build_cycle(set, &e.induced_visits, CycleKind::Decoupling)?;
    let mut paths = Vec::with_capacity(cycle.len());
    for (k, (&edge, gamma)) in e.edge_sequence.iter().zip(cycle.pulses()).enumerate() {
        let label = g.generators[g.edges[edge].generator];
        let base = pulses_per_generator
            .get(&label)
            .ok_or_else(|| Error::Validation(format!("no pulse path for generator {label}")))?;
        let theta = linalg::aligning_phase(gamma, base.target());
        let path = base.with_phase_offset(theta);
        let mismatch = (path.target() - gamma).max_abs();
        if mismatch > PHASE_MATCH_TOL {
            return Err(Error::Validation(format!(
                "pulse path for generator {label} does not reach γ_{} (off by {mismatch:.3e})",
                k + 1
            )));
        }
        paths.push(path);
    }
    Ok((cycle, paths))
}

/// Convenience: geodesic paths of one shape on every generator.
pub fn uniform_pulses(
    set: &DecouplingSet,
    generators: &[usize],
    shape: &crate::pulses::PulseShape,
) -> Result<BTreeMap<usize, PulsePath>> {
    generators
        .iter()
        .map(|&g| {
            Ok((
                g,
                PulsePath::geodesic(set.elements()[g].clone(), shape.clone())?,
            ))
        })
        .collect()
}
