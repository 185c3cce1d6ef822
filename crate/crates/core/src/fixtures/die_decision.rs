use std::collections::{BTreeMap, VecDeque};

use crate::macro_id::{DecompositionDecision, TopoGraph};
use crate::mesh::HalfEdgeMesh;
use crate::segmentation::{connected_components, FeatureKind};

use super::die_layout::*;

/// Width of the band along the main wall whose fillet faces follow the wall.
const WALL_BAND: f64 = 2.0;
/// Half-width in x of the zone where fillet faces belong to the step.
const STEP_ZONE: f64 = 7.0;

/// Wall piece for a point: left field, right field, then the two long sides
/// of the middle field. `shift` nudges every cut.
fn wall_side(x: f64, y: f64, shift: f64) -> usize {
    if x < 0.5 * (RAMP.0 + RAMP.1) + shift {
        0
    } else if x >= STEP_X + shift {
        1
    } else if y < MAIN.cy + shift {
        2
    } else {
        3
    }
}

/// Cut shifts tried in turn, in grid steps.
const SHIFTS: [f64; 9] = [0.0, 1.0, -1.0, 2.0, -2.0, 3.0, -3.0, 4.0, -4.0];

/// The designer's answer to the complex foot transition of the forging die.
///
/// The main wall is cut where the floor changes field: the left field, the
/// right field and the two long sides of the middle field each get their own
/// wall piece. The foot transition is cut into one piece per wall piece, one
/// for the ramp and two for the step (below and above its center line).
/// Cuts are nudged until no transition piece touches a foreign wall piece.
pub fn die_decision(g: &TopoGraph, mesh: &HalfEdgeMesh) -> Option<DecompositionDecision> {
    let query = g.queries.first()?;
    let wall = query
        .linked
        .iter()
        .filter(|f| f.kind == FeatureKind::Flank)
        .max_by_key(|f| g.feature(f).map_or(0, |f| f.faces.len()))?
        .clone();
    let wall_faces = &g.feature(&wall)?.faces;
    let transition = &g.feature(&query.transition)?.faces;
    let (wall_parts, transition_parts) = SHIFTS
        .iter()
        .map(|k| split(mesh, wall_faces, transition, k * SPACING))
        .find(|(w, t)| !touches_foreign(mesh, w, t))?;
    Some(DecompositionDecision {
        query: query.id.clone(),
        feature_splits: BTreeMap::from([(wall, wall_parts)]),
        transition_splits: BTreeMap::from([(query.transition.clone(), transition_parts.into_iter().filter(|p| !p.is_empty()).collect())]),
    })
}

fn split(mesh: &HalfEdgeMesh, wall_faces: &[usize], transition: &[usize], shift: f64) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
    let mut wall_parts: Vec<Vec<usize>> = vec![Vec::new(); 4];
    for &f in wall_faces {
        let c = mesh.mesh.face_centroid(f);
        wall_parts[wall_side(c.x, c.y, shift)].push(f);
    }
    make_connected(mesh, &mut wall_parts);
    let wall_owner = owners(&wall_parts);

    // Labels 0..4 follow the wall pieces, 4 is the ramp, 5 the step foot and
    // 6 the step rim.
    let in_transition: BTreeMap<usize, ()> = transition.iter().map(|&f| (f, ())).collect();
    let mut label: BTreeMap<usize, usize> = BTreeMap::new();
    for &f in transition {
        let c = mesh.mesh.face_centroid(f);
        let seed = if MAIN.sdf(c.x, c.y) > -WALL_BAND {
            let beside = mesh.face_neighbors(f).into_iter().flatten().find_map(|n| wall_owner.get(&n).copied());
            Some(beside.unwrap_or_else(|| wall_side(c.x, c.y, shift)))
        } else if c.x >= RAMP.0 && c.x <= RAMP.1 {
            Some(4)
        } else if (c.x - STEP_X).abs() < STEP_ZONE {
            Some(if c.x < STEP_X { 5 } else { 6 })
        } else {
            None
        };
        if let Some(s) = seed {
            label.insert(f, s);
        }
    }
    let mut queue: VecDeque<usize> = label.keys().copied().collect();
    while let Some(f) = queue.pop_front() {
        let l = label[&f];
        for n in mesh.face_neighbors(f).into_iter().flatten() {
            if in_transition.contains_key(&n) && !label.contains_key(&n) {
                label.insert(n, l);
                queue.push_back(n);
            }
        }
    }
    let mut transition_parts: Vec<Vec<usize>> = vec![Vec::new(); 7];
    for (f, l) in label {
        transition_parts[l].push(f);
    }
    make_connected(mesh, &mut transition_parts);
    (wall_parts, transition_parts)
}

fn owners(parts: &[Vec<usize>]) -> BTreeMap<usize, usize> {
    parts.iter().enumerate().flat_map(|(i, p)| p.iter().map(move |&f| (f, i))).collect()
}

/// A foot piece next to another wall piece than its own, or a ramp or step
/// piece next to the wall at all.
fn touches_foreign(mesh: &HalfEdgeMesh, wall: &[Vec<usize>], transition: &[Vec<usize>]) -> bool {
    let wall_owner = owners(wall);
    transition.iter().enumerate().any(|(i, part)| {
        part.iter().any(|&f| {
            mesh.face_neighbors(f).into_iter().flatten().any(|n| wall_owner.get(&n).is_some_and(|&w| w != i))
        })
    })
}

/// Moves every piece cut off from the bulk of its part into a neighboring
/// part, so each part is edge-connected.
fn make_connected(mesh: &HalfEdgeMesh, parts: &mut [Vec<usize>]) {
    for _ in 0..16 {
        let mut owner: BTreeMap<usize, usize> = BTreeMap::new();
        for (i, p) in parts.iter().enumerate() {
            owner.extend(p.iter().map(|&f| (f, i)));
        }
        let mut moved = false;
        for (i, part) in parts.iter().enumerate() {
            let mut comps = connected_components(mesh, part, |_, _| true);
            if comps.len() < 2 {
                continue;
            }
            comps.sort_by_key(|c| std::cmp::Reverse(c.len()));
            for c in &comps[1..] {
                let target = c
                    .iter()
                    .flat_map(|&f| mesh.face_neighbors(f).into_iter().flatten())
                    .filter_map(|n| owner.get(&n).copied())
                    .find(|&o| o != i);
                if let Some(t) = target {
                    for f in c {
                        owner.insert(*f, t);
                    }
                    moved = true;
                }
            }
        }
        if !moved {
            return;
        }
        for p in parts.iter_mut() {
            p.clear();
        }
        for (f, i) in owner {
            parts[i].push(f);
        }
    }
}
