//! Entity-relationship schemas for collective matrices.
//!
//! A schema declares `K` entity types with instance counts `n_k` and `V`
//! views, each relating a row entity `r_v` to a column entity `c_v`. All
//! indices inside the crate are 0-based; file formats and user-facing
//! reports use 1-based ids.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SchemaViolation, XmcError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub name: String,
    pub size: usize,
}

/// A view relating entity `row` (rows of `X_v`) to entity `col` (columns).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct View {
    pub row: usize,
    pub col: usize,
}

/// Position of one scalar inside a collective matrix: view `view`, entry
/// `(row, col)` of `X_view`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BasisIndex {
    pub view: usize,
    pub row: usize,
    pub col: usize,
}

impl BasisIndex {
    pub fn new(view: usize, row: usize, col: usize) -> Self {
        Self { view, row, col }
    }
}

/// Where column `col` of the entity-matrix `𝕏_k` comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ColumnRef {
    pub view: usize,
    /// Index inside the view along the *other* entity.
    pub inner: usize,
    /// True when the block inside `𝕏_k` is `X_vᵀ` (entity `k` is the column entity of `v`).
    pub transposed: bool,
}

/// Two-coloring of the entity graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bipartition {
    colors: Vec<u8>,
}

impl Bipartition {
    pub fn color(&self, k: usize) -> u8 {
        self.colors[k]
    }

    pub fn colors(&self) -> &[u8] {
        &self.colors
    }

    /// Entity ids (0-based) of each side, the side containing entity 0 first.
    pub fn sides(&self) -> (Vec<usize>, Vec<usize>) {
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for (k, &c) in self.colors.iter().enumerate() {
            if c == self.colors[0] {
                a.push(k);
            } else {
                b.push(k);
            }
        }
        (a, b)
    }
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    view: usize,
    start: usize,
    width: usize,
    transposed: bool,
}

/// Validated entity-relationship schema. Structural invariants (positive
/// sizes, no self views, no duplicated pairs, connectivity) always hold;
/// bipartiteness is recorded but not required, so that representation code
/// can still work on odd-cycle graphs while solver paths refuse them.
#[derive(Debug, Clone)]
pub struct CollectiveSchema {
    entities: Vec<Entity>,
    views: Vec<View>,
    offsets: Vec<usize>,
    widths: Vec<usize>,
    segments: Vec<Vec<Segment>>,
    bipartition: std::result::Result<Bipartition, Vec<usize>>,
}

impl PartialEq for CollectiveSchema {
    fn eq(&self, other: &Self) -> bool {
        self.entities == other.entities && self.views == other.views
    }
}

impl CollectiveSchema {
    /// Builds a schema, rejecting every structural violation at once.
    /// Odd cycles are allowed here; see [`CollectiveSchema::validate`].
    pub fn new(entities: Vec<Entity>, views: Vec<View>) -> Result<Self> {
        let mut violations = structural_violations(&entities, &views);
        violations.retain(|v| !matches!(v, SchemaViolation::OddCycle { .. }));
        if !violations.is_empty() {
            return Err(XmcError::InvalidSchema(violations));
        }
        let bipartition = two_color(entities.len(), &views);

        let mut offsets = Vec::with_capacity(entities.len());
        let mut acc = 0;
        for e in &entities {
            offsets.push(acc);
            acc += e.size;
        }

        let mut segments = vec![Vec::new(); entities.len()];
        let mut widths = vec![0; entities.len()];
        for (v, view) in views.iter().enumerate() {
            let w = entities[view.col].size;
            segments[view.row].push(Segment {
                view: v,
                start: widths[view.row],
                width: w,
                transposed: false,
            });
            widths[view.row] += w;
            let w = entities[view.row].size;
            segments[view.col].push(Segment {
                view: v,
                start: widths[view.col],
                width: w,
                transposed: true,
            });
            widths[view.col] += w;
        }

        Ok(Self {
            entities,
            views,
            offsets,
            widths,
            segments,
            bipartition,
        })
    }

    /// Convenience constructor from sizes and 0-based `(row, col)` pairs.
    pub fn from_sizes(sizes: &[usize], views: &[(usize, usize)]) -> Result<Self> {
        let entities = sizes
            .iter()
            .enumerate()
            .map(|(k, &size)| Entity {
                name: format!("e{}", k + 1),
                size,
            })
            .collect();
        let views = views.iter().map(|&(row, col)| View { row, col }).collect();
        Self::new(entities, views)
    }

    /// Four entity types of equal size `n` with views (1,2), (1,3), (2,4).
    pub fn four_entity_preset(n: usize) -> Result<Self> {
        Self::from_sizes(&[n; 4], &[(0, 1), (0, 2), (1, 3)])
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn views(&self) -> &[View] {
        &self.views
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_views(&self) -> usize {
        self.views.len()
    }

    pub fn size(&self, k: usize) -> usize {
        self.entities[k].size
    }

    pub fn view(&self, v: usize) -> View {
        self.views[v]
    }

    /// `(rows, cols)` of `X_v`.
    pub fn view_shape(&self, v: usize) -> (usize, usize) {
        let view = self.views[v];
        (self.entities[view.row].size, self.entities[view.col].size)
    }

    /// N = Σ_k n_k.
    pub fn total_size(&self) -> usize {
        self.entities.iter().map(|e| e.size).sum()
    }

    /// Σ_v n_{r_v}·n_{c_v}, the number of scalar cells.
    pub fn num_cells(&self) -> usize {
        (0..self.views.len())
            .map(|v| {
                let (r, c) = self.view_shape(v);
                r * c
            })
            .sum()
    }

    pub fn offset(&self, k: usize) -> usize {
        self.offsets[k]
    }

    /// m_k: column count of the entity matrix `𝕏_k`.
    pub fn entity_width(&self, k: usize) -> usize {
        self.widths[k]
    }

    pub fn is_bipartite(&self) -> bool {
        self.bipartition.is_ok()
    }

    /// Full validation report: the bipartition, or every violated invariant.
    pub fn validate(&self) -> std::result::Result<Bipartition, Vec<SchemaViolation>> {
        match &self.bipartition {
            Ok(b) => Ok(b.clone()),
            Err(cycle) => Err(vec![SchemaViolation::OddCycle {
                cycle: cycle.iter().map(|k| k + 1).collect(),
            }]),
        }
    }

    /// Gate used by every solver path.
    pub fn require_bipartite(&self) -> Result<&Bipartition> {
        self.bipartition
            .as_ref()
            .map_err(|cycle| XmcError::OddCycle(cycle.iter().map(|k| k + 1).collect()))
    }

    pub fn check_index(&self, idx: BasisIndex) -> Result<()> {
        if idx.view >= self.views.len() {
            return Err(XmcError::IndexOutOfRange(format!(
                "view {} of {}",
                idx.view + 1,
                self.views.len()
            )));
        }
        let (r, c) = self.view_shape(idx.view);
        if idx.row >= r || idx.col >= c {
            return Err(XmcError::IndexOutOfRange(format!(
                "({}, {}) outside {}x{} view {}",
                idx.row + 1,
                idx.col + 1,
                r,
                c,
                idx.view + 1
            )));
        }
        Ok(())
    }

    /// Position of a basis element inside the N×N block-symmetric layout.
    pub fn global_index(&self, idx: BasisIndex) -> Result<(usize, usize)> {
        self.check_index(idx)?;
        Ok(self.global_index_unchecked(idx))
    }

    #[inline]
    pub(crate) fn global_index_unchecked(&self, idx: BasisIndex) -> (usize, usize) {
        let view = self.views[idx.view];
        (
            self.offsets[view.row] + idx.row,
            self.offsets[view.col] + idx.col,
        )
    }

    /// Entity owning global position `a` and the local row inside it.
    pub fn locate(&self, a: usize) -> Result<(usize, usize)> {
        if a >= self.total_size() {
            return Err(XmcError::IndexOutOfRange(format!("global index {a}")));
        }
        let k = self.offsets.partition_point(|&o| o <= a) - 1;
        Ok((k, a - self.offsets[k]))
    }

    /// Column `col` of `𝕏_k` in canonical order (ascending view id, `X_v`
    /// when `r_v = k`, `X_vᵀ` when `c_v = k`).
    pub fn entity_column_map(&self, k: usize, col: usize) -> Result<ColumnRef> {
        if k >= self.entities.len() || col >= self.widths[k] {
            return Err(XmcError::IndexOutOfRange(format!(
                "column {} of entity {}",
                col + 1,
                k + 1
            )));
        }
        let segs = &self.segments[k];
        let s = segs.partition_point(|s| s.start <= col) - 1;
        let seg = segs[s];
        Ok(ColumnRef {
            view: seg.view,
            inner: col - seg.start,
            transposed: seg.transposed,
        })
    }

    /// Inverse of [`CollectiveSchema::entity_column_map`].
    pub fn entity_column_index(&self, k: usize, cref: ColumnRef) -> Result<usize> {
        let seg = self
            .segments
            .get(k)
            .and_then(|segs| {
                segs.iter()
                    .find(|s| s.view == cref.view && s.transposed == cref.transposed)
            })
            .ok_or_else(|| {
                XmcError::IndexOutOfRange(format!(
                    "view {} is not incident to entity {} that way",
                    cref.view + 1,
                    k + 1
                ))
            })?;
        if cref.inner >= seg.width {
            return Err(XmcError::IndexOutOfRange(format!(
                "inner index {} of width {}",
                cref.inner + 1,
                seg.width
            )));
        }
        Ok(seg.start + cref.inner)
    }

    /// Element `(i, col)` of `𝕏_k` as a basis index.
    pub fn entity_cell(&self, k: usize, i: usize, col: usize) -> Result<BasisIndex> {
        if i >= self.size(k) {
            return Err(XmcError::IndexOutOfRange(format!(
                "row {} of entity {}",
                i + 1,
                k + 1
            )));
        }
        let c = self.entity_column_map(k, col)?;
        Ok(if c.transposed {
            BasisIndex::new(c.view, c.inner, i)
        } else {
            BasisIndex::new(c.view, i, c.inner)
        })
    }

    /// Iterates all basis indices in view-major, row-major order.
    pub fn basis_indices(&self) -> impl Iterator<Item = BasisIndex> + '_ {
        (0..self.views.len()).flat_map(move |v| {
            let (r, c) = self.view_shape(v);
            (0..r).flat_map(move |i| (0..c).map(move |j| BasisIndex::new(v, i, j)))
        })
    }
}

/// Validates raw sizes and 0-based views, listing every violated invariant.
pub fn validate(
    entities: &[Entity],
    views: &[View],
) -> std::result::Result<Bipartition, Vec<SchemaViolation>> {
    let violations = structural_violations(entities, views);
    if violations.is_empty() {
        two_color(entities.len(), views).map_err(|cycle| {
            vec![SchemaViolation::OddCycle {
                cycle: cycle.iter().map(|k| k + 1).collect(),
            }]
        })
    } else {
        Err(violations)
    }
}

fn structural_violations(entities: &[Entity], views: &[View]) -> Vec<SchemaViolation> {
    let k_count = entities.len();
    let mut out = Vec::new();
    for (k, e) in entities.iter().enumerate() {
        if e.size == 0 {
            out.push(SchemaViolation::EmptyEntity { entity: k + 1 });
        }
    }
    let mut seen: HashMap<(usize, usize), usize> = HashMap::new();
    let mut adjacency = vec![Vec::new(); k_count];
    for (v, view) in views.iter().enumerate() {
        let mut ok = true;
        for e in [view.row, view.col] {
            if e >= k_count {
                out.push(SchemaViolation::UnknownEntity {
                    view: v + 1,
                    entity: e + 1,
                });
                ok = false;
            }
        }
        if !ok {
            continue;
        }
        if view.row == view.col {
            out.push(SchemaViolation::SelfView { view: v + 1 });
            continue;
        }
        let key = (view.row.min(view.col), view.row.max(view.col));
        if let Some(&first) = seen.get(&key) {
            out.push(SchemaViolation::DuplicateView {
                first: first + 1,
                second: v + 1,
            });
        } else {
            seen.insert(key, v);
        }
        adjacency[view.row].push(view.col);
        adjacency[view.col].push(view.row);
    }

    // Components over the simple graph (self views ignored).
    let mut comp = vec![usize::MAX; k_count];
    let mut components = Vec::new();
    for start in 0..k_count {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = components.len();
        let mut members = vec![start + 1];
        comp[start] = id;
        let mut queue = VecDeque::from([start]);
        while let Some(a) = queue.pop_front() {
            for &b in &adjacency[a] {
                if comp[b] == usize::MAX {
                    comp[b] = id;
                    members.push(b + 1);
                    queue.push_back(b);
                }
            }
        }
        members.sort_unstable();
        components.push(members);
    }
    if components.len() > 1 {
        out.push(SchemaViolation::Disconnected { components });
    }
    // With K ≥ 2 an isolated entity already shows up as Disconnected.
    if k_count == 1 && adjacency[0].is_empty() {
        out.push(SchemaViolation::IsolatedEntity { entity: 1 });
    }
    if let Err(cycle) = two_color(k_count, views) {
        out.push(SchemaViolation::OddCycle {
            cycle: cycle.iter().map(|k| k + 1).collect(),
        });
    }
    out
}

/// BFS two-coloring; on failure returns an odd closed walk (0-based, first
/// vertex repeated at the end).
fn two_color(k_count: usize, views: &[View]) -> std::result::Result<Bipartition, Vec<usize>> {
    let mut adjacency = vec![Vec::new(); k_count];
    for view in views {
        if view.row >= k_count || view.col >= k_count {
            continue;
        }
        if view.row == view.col {
            // reported as SelfView
            continue;
        }
        adjacency[view.row].push(view.col);
        adjacency[view.col].push(view.row);
    }
    let mut color = vec![u8::MAX; k_count];
    let mut parent = vec![usize::MAX; k_count];
    let mut depth = vec![0usize; k_count];
    for start in 0..k_count {
        if color[start] != u8::MAX {
            continue;
        }
        color[start] = 0;
        let mut queue = VecDeque::from([start]);
        while let Some(a) = queue.pop_front() {
            for &b in &adjacency[a] {
                if color[b] == u8::MAX {
                    color[b] = 1 - color[a];
                    parent[b] = a;
                    depth[b] = depth[a] + 1;
                    queue.push_back(b);
                } else if color[b] == color[a] {
                    return Err(odd_cycle(a, b, &parent, &depth));
                }
            }
        }
    }
    Ok(Bipartition { colors: color })
}

fn odd_cycle(a: usize, b: usize, parent: &[usize], depth: &[usize]) -> Vec<usize> {
    let (mut x, mut y) = (a, b);
    let mut left = vec![x];
    let mut right = vec![y];
    while depth[x] > depth[y] {
        x = parent[x];
        left.push(x);
    }
    while depth[y] > depth[x] {
        y = parent[y];
        right.push(y);
    }
    while x != y {
        x = parent[x];
        y = parent[y];
        left.push(x);
        right.push(y);
    }
    right.pop();
    right.reverse();
    left.extend(right);
    left.push(a);
    left
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sizes(n: &[usize]) -> Vec<Entity> {
        n.iter()
            .enumerate()
            .map(|(k, &size)| Entity {
                name: format!("e{k}"),
                size,
            })
            .collect()
    }

    fn views(v: &[(usize, usize)]) -> Vec<View> {
        v.iter().map(|&(row, col)| View { row, col }).collect()
    }

    #[test]
    fn preset_bipartition() {
        let b = validate(&sizes(&[3; 4]), &views(&[(0, 1), (0, 2), (1, 3)])).unwrap();
        assert_eq!(b.sides(), (vec![0, 3], vec![1, 2]));
    }

    #[test]
    fn triangle_is_odd_cycle() {
        let err = validate(&sizes(&[2; 3]), &views(&[(0, 1), (1, 2), (0, 2)])).unwrap_err();
        match &err[..] {
            [SchemaViolation::OddCycle { cycle }] => {
                assert_eq!(cycle.len(), 4);
                assert_eq!(cycle.first(), cycle.last());
            }
            other => panic!("unexpected {other:?}"),
        }
        let s = CollectiveSchema::from_sizes(&[2; 3], &[(0, 1), (1, 2), (0, 2)]).unwrap();
        assert!(!s.is_bipartite());
        assert!(matches!(s.require_bipartite(), Err(XmcError::OddCycle(_))));
    }

    #[test]
    fn self_view_reported() {
        let err = validate(&sizes(&[2, 2]), &views(&[(0, 0)])).unwrap_err();
        assert!(err.contains(&SchemaViolation::SelfView { view: 1 }));
        assert!(CollectiveSchema::from_sizes(&[2, 2], &[(0, 0)]).is_err());
    }

    #[test]
    fn lists_every_violation() {
        let err = validate(&sizes(&[0, 2, 2, 2]), &views(&[(0, 1), (1, 0), (2, 2)])).unwrap_err();
        assert!(err.contains(&SchemaViolation::EmptyEntity { entity: 1 }));
        assert!(err.contains(&SchemaViolation::DuplicateView { first: 1, second: 2 }));
        assert!(err.contains(&SchemaViolation::SelfView { view: 3 }));
        assert!(err
            .iter()
            .any(|v| matches!(v, SchemaViolation::Disconnected { .. })));
    }

    #[test]
    fn disconnected_message_suggests_split() {
        let err = CollectiveSchema::from_sizes(&[1; 4], &[(0, 1), (2, 3)]).unwrap_err();
        assert!(err.to_string().contains("split"));
    }

    #[test]
    fn entity_widths() {
        let n = 5;
        let s = CollectiveSchema::four_entity_preset(n).unwrap();
        let m: Vec<_> = (0..4).map(|k| s.entity_width(k)).collect();
        assert_eq!(m, vec![2 * n, 2 * n, n, n]);
        let s = CollectiveSchema::from_sizes(&[2, 3], &[(0, 1)]).unwrap();
        assert_eq!((s.entity_width(0), s.entity_width(1)), (3, 2));
    }

    #[test]
    fn global_index_examples() {
        let s = CollectiveSchema::four_entity_preset(2).unwrap();
        // 1-based (v=3,i=1,j=1) -> (3,7)
        assert_eq!(s.global_index(BasisIndex::new(2, 0, 0)).unwrap(), (2, 6));
        assert_eq!(s.global_index(BasisIndex::new(0, 0, 0)).unwrap(), (0, 2));
        assert!(s.global_index(BasisIndex::new(0, 2, 0)).is_err());
        assert!(s.global_index(BasisIndex::new(3, 0, 0)).is_err());
    }

    #[test]
    fn column_map_examples() {
        let s = CollectiveSchema::four_entity_preset(2).unwrap();
        // 𝕏_1 = hcat(X_1, X_2): 1-based column 3 is column 1 of X_2.
        assert_eq!(
            s.entity_column_map(0, 2).unwrap(),
            ColumnRef {
                view: 1,
                inner: 0,
                transposed: false
            }
        );
        // 𝕏_2 = hcat(X_1ᵀ, X_3): column 1 is row 1 of X_1.
        assert_eq!(
            s.entity_column_map(1, 0).unwrap(),
            ColumnRef {
                view: 0,
                inner: 0,
                transposed: true
            }
        );
        assert!(s.entity_column_map(2, 2).is_err());
        for k in 0..4 {
            for col in 0..s.entity_width(k) {
                let c = s.entity_column_map(k, col).unwrap();
                assert_eq!(s.entity_column_index(k, c).unwrap(), col);
            }
        }
    }

    #[test]
    fn locate_inverts_offsets() {
        let s = CollectiveSchema::from_sizes(&[2, 3, 1], &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(s.locate(0).unwrap(), (0, 0));
        assert_eq!(s.locate(2).unwrap(), (1, 0));
        assert_eq!(s.locate(5).unwrap(), (2, 0));
        assert!(s.locate(6).is_err());
    }
}
