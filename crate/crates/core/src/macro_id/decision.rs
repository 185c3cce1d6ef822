use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adjacency::{derive_arcs, resolve_property, RelProperty};
use crate::curvature::feature_shape_property;
use crate::segmentation::{connected_components, refresh_boundaries, FeatureId, FeatureKind, GeomFeature};

use super::engine::Identifier;
use super::{DecompositionDecision, IdentifyError, RetiredFeature, Stage, StepEvent, TopoGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FaceProblem {
    /// A face of the feature is in no part.
    Missing,
    /// A face is listed in more than one part.
    Duplicate,
    /// A face does not belong to the feature being split.
    Foreign,
    /// The part is not edge-connected; the face is outside its largest piece.
    Disconnected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaceIssue {
    pub feature: FeatureId,
    pub face: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub part: Option<usize>,
    pub problem: FaceProblem,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecisionError {
    #[error("no pending query '{0}'")]
    UnknownQuery(String),
    #[error("{0} cannot be split by this query")]
    NotSplittable(FeatureId),
    #[error("decision splits nothing")]
    NothingToSplit,
    #[error("part {part} of {feature} is empty")]
    EmptyPart { feature: FeatureId, part: usize },
    #[error("{} face problem(s) in the partition, first: face {} of {} is {:?}", .0.len(), .0[0].face, .0[0].feature, .0[0].problem)]
    Partition(Vec<FaceIssue>),
    #[error("{feature} ends up with {} arcs (to {}); at most 2 allowed", .links.len(), super::join(.links))]
    TooManyArcs { feature: FeatureId, links: Vec<String> },
    #[error("{feature} links {} feature(s); a sub-transition must link exactly 2", .links.len())]
    SubTransitionLinks { feature: FeatureId, links: Vec<FeatureId> },
    #[error("{0} still links more than 2 features")]
    StillComplex(FeatureId),
}

impl DecisionError {
    pub fn face_issues(&self) -> &[FaceIssue] {
        match self {
            DecisionError::Partition(issues) => issues,
            _ => &[],
        }
    }
}

fn check_partition(id: &Identifier, feature: &GeomFeature, parts: &[Vec<usize>]) -> Result<(), DecisionError> {
    let own: BTreeSet<usize> = feature.faces.iter().copied().collect();
    let mut seen = BTreeSet::new();
    let mut issues = Vec::new();
    let issue = |face, part, problem| FaceIssue { feature: feature.id.clone(), face, part, problem };
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(DecisionError::EmptyPart { feature: feature.id.clone(), part: i });
        }
        for &f in part {
            if !own.contains(&f) {
                issues.push(issue(f, Some(i), FaceProblem::Foreign));
            } else if !seen.insert(f) {
                issues.push(issue(f, Some(i), FaceProblem::Duplicate));
            }
        }
        let mut comps = connected_components(&id.mesh, part, |_, _| true);
        if comps.len() > 1 {
            comps.sort_by_key(|c| std::cmp::Reverse(c.len()));
            for c in &comps[1..] {
                issues.extend(c.iter().map(|&f| issue(f, Some(i), FaceProblem::Disconnected)));
            }
        }
    }
    issues.extend(own.difference(&seen).map(|&f| issue(f, None, FaceProblem::Missing)));
    if issues.is_empty() {
        Ok(())
    } else {
        Err(DecisionError::Partition(issues))
    }
}

/// Splits features and transitions named by a decision, rebuilds the arcs
/// around the new pieces and clears the query. The graph is untouched on
/// error.
pub(super) fn apply_decision(id: &Identifier, g: &mut TopoGraph, d: &DecompositionDecision) -> Result<(), IdentifyError> {
    let query = g.pending_query(&d.query).ok_or_else(|| DecisionError::UnknownQuery(d.query.clone()))?.clone();
    if d.feature_splits.is_empty() && d.transition_splits.is_empty() {
        return Err(DecisionError::NothingToSplit.into());
    }
    let assignment = g.assignment();
    for key in d.feature_splits.keys() {
        if key.kind == FeatureKind::Transition || !query.linked.contains(key) || assignment.contains_key(key) {
            return Err(DecisionError::NotSplittable(key.clone()).into());
        }
    }
    for key in d.transition_splits.keys() {
        if *key != query.transition {
            return Err(DecisionError::NotSplittable(key.clone()).into());
        }
    }

    let mut work = g.clone();
    let mut created: Vec<FeatureId> = Vec::new();
    let mut retired: BTreeSet<FeatureId> = BTreeSet::new();
    for (key, parts) in d.feature_splits.iter().chain(d.transition_splits.iter()) {
        let parent = work.feature(key).ok_or_else(|| DecisionError::NotSplittable(key.clone()))?.clone();
        check_partition(id, &parent, parts)?;
        let children: Vec<FeatureId> = (0..parts.len()).map(|i| parent.id.child(i as u32 + 1)).collect();
        for (child, part) in children.iter().zip(parts) {
            let mut faces = part.clone();
            faces.sort_unstable();
            let shape_property = feature_shape_property(&faces, &id.mesh, &id.curvatures, id.thresholds).property;
            work.features.push(GeomFeature {
                id: child.clone(),
                kind: parent.kind,
                faces,
                shape_property,
                boundary_loops: Vec::new(),
                sub_of: Some(parent.id.clone()),
                aggregate: false,
            });
        }
        work.features.retain(|f| f.id != parent.id);
        work.retired.push(RetiredFeature { id: parent.id.clone(), children: children.clone() });
        retired.insert(parent.id.clone());
        created.extend(children);
    }
    work.features.sort_by(|a, b| a.id.cmp(&b.id));
    refresh_boundaries(&id.mesh, &mut work.features);

    let stale: Vec<u32> = work
        .arcs
        .iter()
        .filter(|a| a.ends.iter().chain(a.transition.iter()).any(|f| retired.contains(f)))
        .map(|a| a.id)
        .collect();
    work.arcs.retain(|a| !stale.contains(&a.id));
    for a in &stale {
        work.hidden.remove(a);
    }
    let touches_new = |a: &crate::adjacency::AdjacencyRelation| a.ends.iter().chain(a.transition.iter()).any(|f| created.contains(f));
    let mut fresh: Vec<_> = derive_arcs(&work.features, 0).into_iter().filter(|a| touches_new(a)).collect();
    for arc in fresh.iter_mut() {
        arc.id = work.next_arc;
        work.next_arc += 1;
        if !arc.complex && arc.property == RelProperty::Unspecified {
            let test = resolve_property(arc, &work.features, &id.mesh, &id.setup, id.options.graph.samples);
            if let Some(p) = test.property() {
                arc.property = p;
                arc.resolved = true;
            }
        }
    }
    let fresh = id.fan_out_parting(&mut work, fresh);
    let assignment = work.assignment();
    for arc in &fresh {
        if arc.ends.iter().any(|e| assignment.contains_key(e)) {
            work.hidden.insert(arc.id);
        }
    }
    work.arcs.extend(fresh);

    for f in &created {
        if f.kind == FeatureKind::Transition {
            let links: Vec<FeatureId> = work.arcs.iter().filter(|a| a.transition.as_ref() == Some(f)).flat_map(|a| a.ends.clone()).collect();
            let mut distinct = links.clone();
            distinct.sort();
            distinct.dedup();
            if distinct.len() != 2 {
                return Err(DecisionError::SubTransitionLinks { feature: f.clone(), links: distinct }.into());
            }
        } else {
            let links: Vec<String> = work
                .arcs
                .iter()
                .filter(|a| !a.to_bounding_box && a.links(f))
                .map(|a| {
                    let others = a.ends.iter().filter(|e| *e != f).map(|e| e.to_string()).collect::<Vec<_>>().join("+");
                    match &a.transition {
                        Some(t) => format!("{others} via {t}"),
                        None => others,
                    }
                })
                .collect();
            if links.len() > 2 {
                return Err(DecisionError::TooManyArcs { feature: f.clone(), links }.into());
            }
        }
    }
    if !retired.contains(&query.transition) && work.arcs.iter().any(|a| a.complex && a.transition.as_ref() == Some(&query.transition)) {
        return Err(DecisionError::StillComplex(query.transition.clone()).into());
    }

    work.queries.retain(|q| q.id != query.id);
    work.rounds += 1;
    work.stage = if work.queries.is_empty() { Stage::Identifying } else { Stage::AwaitingDecision };
    let names: Vec<String> = created.iter().map(|c| c.to_string()).collect();
    work.events.push(StepEvent {
        step: 4,
        round: work.rounds,
        iteration: 0,
        macro_id: None,
        message: format!("{} answered: {}", query.id, names.join(", ")),
    });
    log::info!("{} answered with {} new feature(s)", query.id, created.len());
    *g = work;
    Ok(())
}
