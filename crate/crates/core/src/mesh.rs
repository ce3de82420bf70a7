//! Quadtree forest of axis-aligned square cells.
//!
//! Geometry is stored on an integer lattice: a root cell has side
//! `1 << MAX_LEVEL` lattice units, so every vertex, edge midpoint and cell
//! centre reachable by refinement has exact integer coordinates. Physical
//! coordinates are recovered through the owning [`Forest`].
//!
//! Refinement keeps the mesh 1-irregular: the levels of edge-adjacent leaves
//! differ by at most one.

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

/// Depth of the integer lattice below a root cell.
pub const MAX_LEVEL: u8 = 24;

/// Side length of the L-shaped panel in mm.
pub const LSHAPE_SIDE: f64 = 500.0;
/// Coordinates of the re-entrant corner of the L-shaped panel in mm.
pub const LSHAPE_CORNER: [f64; 2] = [250.0, 250.0];
/// Start of the 30 mm loading stripe on the edge `y = 250`.
pub const LOAD_STRIPE_X0: f64 = 470.0;

const GEOM_TOL: f64 = 1e-9;

/// Point on the integer lattice.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IPoint {
    pub x: i64,
    pub y: i64,
}

impl IPoint {
    pub const fn new(x: i64, y: i64) -> Self {
        Self { x, y }
    }

    pub fn midpoint(a: IPoint, b: IPoint) -> IPoint {
        debug_assert!((a.x + b.x) % 2 == 0 && (a.y + b.y) % 2 == 0);
        IPoint::new((a.x + b.x) / 2, (a.y + b.y) / 2)
    }
}

/// Address of a cell: refinement level and lattice index at that level.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellKey {
    pub level: u8,
    pub ix: i64,
    pub iy: i64,
}

impl CellKey {
    pub const fn root(ix: i64, iy: i64) -> Self {
        Self { level: 0, ix, iy }
    }

    /// Side length in lattice units.
    pub fn size(&self) -> i64 {
        1i64 << (MAX_LEVEL - self.level)
    }

    pub fn lower(&self) -> IPoint {
        let s = self.size();
        IPoint::new(self.ix * s, self.iy * s)
    }

    pub fn parent(&self) -> Option<CellKey> {
        (self.level > 0).then(|| CellKey {
            level: self.level - 1,
            ix: self.ix >> 1,
            iy: self.iy >> 1,
        })
    }

    /// Children in lexicographic order: (0,0), (1,0), (0,1), (1,1).
    pub fn children(&self) -> [CellKey; 4] {
        let l = self.level + 1;
        let (x, y) = (2 * self.ix, 2 * self.iy);
        [
            CellKey {
                level: l,
                ix: x,
                iy: y,
            },
            CellKey {
                level: l,
                ix: x + 1,
                iy: y,
            },
            CellKey {
                level: l,
                ix: x,
                iy: y + 1,
            },
            CellKey {
                level: l,
                ix: x + 1,
                iy: y + 1,
            },
        ]
    }

    /// Corners in lexicographic order: (0,0), (1,0), (0,1), (1,1).
    pub fn corners(&self) -> [IPoint; 4] {
        let lo = self.lower();
        let s = self.size();
        [
            lo,
            IPoint::new(lo.x + s, lo.y),
            IPoint::new(lo.x, lo.y + s),
            IPoint::new(lo.x + s, lo.y + s),
        ]
    }

    /// Closed containment test.
    pub fn contains(&self, p: IPoint) -> bool {
        let lo = self.lower();
        let s = self.size();
        p.x >= lo.x && p.x <= lo.x + s && p.y >= lo.y && p.y <= lo.y + s
    }

    /// Endpoints of a face, ordered by increasing coordinate.
    pub fn face_endpoints(&self, face: Face) -> [IPoint; 2] {
        let [c00, c10, c01, c11] = self.corners();
        match face {
            Face::Left => [c00, c01],
            Face::Right => [c10, c11],
            Face::Bottom => [c00, c10],
            Face::Top => [c01, c11],
        }
    }

    fn is_ancestor_of(&self, other: &CellKey) -> bool {
        if other.level < self.level {
            return false;
        }
        let shift = other.level - self.level;
        (other.ix >> shift) == self.ix && (other.iy >> shift) == self.iy
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Face {
    Left,
    Right,
    Bottom,
    Top,
}

impl Face {
    pub const ALL: [Face; 4] = [Face::Left, Face::Right, Face::Bottom, Face::Top];

    pub fn offset(self) -> (i64, i64) {
        match self {
            Face::Left => (-1, 0),
            Face::Right => (1, 0),
            Face::Bottom => (0, -1),
            Face::Top => (0, 1),
        }
    }

    pub fn opposite(self) -> Face {
        match self {
            Face::Left => Face::Right,
            Face::Right => Face::Left,
            Face::Bottom => Face::Top,
            Face::Top => Face::Bottom,
        }
    }

    /// Outward unit normal.
    pub fn normal(self) -> [f64; 2] {
        let (dx, dy) = self.offset();
        [dx as f64, dy as f64]
    }

    /// Child indices (see [`CellKey::children`]) adjacent to this face.
    fn children_on(self) -> [usize; 2] {
        match self {
            Face::Left => [0, 2],
            Face::Right => [1, 3],
            Face::Bottom => [0, 1],
            Face::Top => [2, 3],
        }
    }
}

/// Boundary segment classes of the L-shaped panel.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundaryMarker {
    /// Clamped bottom edge `y = 0`, `0 <= x <= 250`.
    BottomClamp,
    /// Loading stripe `y = 250`, `470 <= x <= 500`.
    LoadStripe,
    Free,
}

impl BoundaryMarker {
    /// The force measurement segment coincides with the clamped edge.
    pub const MEASURE_SEGMENT: BoundaryMarker = BoundaryMarker::BottomClamp;
}

#[derive(Clone, Debug, PartialEq)]
pub enum DomainShape {
    LShape,
    Rectangle,
}

/// Root tiling shared by every mesh refined from it.
#[derive(Clone, Debug, PartialEq)]
pub struct Forest {
    pub origin: [f64; 2],
    pub root_size: f64,
    pub roots: Vec<(i64, i64)>,
    pub shape: DomainShape,
}

impl Forest {
    /// `[0, 500]^2` without the lower-right quadrant, as three 250 mm roots.
    pub fn lshape() -> Self {
        Self {
            origin: [0.0, 0.0],
            root_size: 250.0,
            roots: vec![(0, 0), (0, 1), (1, 1)],
            shape: DomainShape::LShape,
        }
    }

    pub fn rectangle(origin: [f64; 2], root_size: f64, nx: i64, ny: i64) -> Self {
        let roots = (0..ny).flat_map(|j| (0..nx).map(move |i| (i, j))).collect();
        Self {
            origin,
            root_size,
            roots,
            shape: DomainShape::Rectangle,
        }
    }

    /// Physical length of one lattice unit.
    pub fn unit(&self) -> f64 {
        self.root_size / (1i64 << MAX_LEVEL) as f64
    }

    pub fn to_phys(&self, p: IPoint) -> [f64; 2] {
        let u = self.unit();
        [
            self.origin[0] + p.x as f64 * u,
            self.origin[1] + p.y as f64 * u,
        ]
    }

    pub fn length(&self, lattice_units: i64) -> f64 {
        lattice_units as f64 * self.unit()
    }

    fn has_root(&self, ix: i64, iy: i64) -> bool {
        self.roots.contains(&(ix, iy))
    }

    /// Marker of a boundary point, by coordinate predicates.
    pub fn classify(&self, x: [f64; 2]) -> BoundaryMarker {
        match self.shape {
            DomainShape::LShape => {
                if x[1].abs() < GEOM_TOL && x[0] >= -GEOM_TOL && x[0] <= 250.0 + GEOM_TOL {
                    BoundaryMarker::BottomClamp
                } else if (x[1] - 250.0).abs() < GEOM_TOL
                    && x[0] >= LOAD_STRIPE_X0 - GEOM_TOL
                    && x[0] <= LSHAPE_SIDE + GEOM_TOL
                {
                    BoundaryMarker::LoadStripe
                } else {
                    BoundaryMarker::Free
                }
            }
            DomainShape::Rectangle => BoundaryMarker::Free,
        }
    }

    /// Length of the part of a boundary segment that lies in `marker`'s set.
    pub fn marked_length(&self, a: [f64; 2], b: [f64; 2], marker: BoundaryMarker) -> f64 {
        let interval = match (self.shape.clone(), marker) {
            (DomainShape::LShape, BoundaryMarker::BottomClamp) => Some((0.0, 0.0, 250.0)),
            (DomainShape::LShape, BoundaryMarker::LoadStripe) => {
                Some((250.0, LOAD_STRIPE_X0, LSHAPE_SIDE))
            }
            _ => None,
        };
        match interval {
            Some((y, x0, x1)) => {
                let horizontal = (a[1] - b[1]).abs() < GEOM_TOL && (a[1] - y).abs() < GEOM_TOL;
                if !horizontal {
                    return 0.0;
                }
                let (lo, hi) = (a[0].min(b[0]), a[0].max(b[0]));
                (hi.min(x1) - lo.max(x0)).max(0.0)
            }
            None if marker == BoundaryMarker::Free => {
                let len = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
                len - self.marked_length(a, b, BoundaryMarker::BottomClamp)
                    - self.marked_length(a, b, BoundaryMarker::LoadStripe)
            }
            None => 0.0,
        }
    }
}

/// Physical placement of a leaf: lower-left corner and side length.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct CellBox {
    pub x0: f64,
    pub y0: f64,
    pub size: f64,
}

impl CellBox {
    pub fn center(&self) -> [f64; 2] {
        [self.x0 + 0.5 * self.size, self.y0 + 0.5 * self.size]
    }

    pub fn x1(&self) -> f64 {
        self.x0 + self.size
    }

    pub fn y1(&self) -> f64 {
        self.y0 + self.size
    }

    pub fn area(&self) -> f64 {
        self.size * self.size
    }

    /// Maps reference coordinates in `[0,1]^2` to physical coordinates.
    pub fn map(&self, xi: [f64; 2]) -> [f64; 2] {
        [self.x0 + xi[0] * self.size, self.y0 + xi[1] * self.size]
    }
}

/// What lies across a leaf face.
#[derive(Clone, Debug, PartialEq)]
pub enum Neighbors {
    Boundary,
    /// One leaf of equal or coarser level.
    Single(CellKey),
    /// Finer leaves covering the face.
    Finer(Vec<CellKey>),
}

/// A vertex lying in the interior of a coarser neighbour's edge.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct HangingVertex {
    pub vertex: IPoint,
    pub ends: [IPoint; 2],
}

/// A fine leaf face that is half of a coarser leaf's face.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct CoarseInterface {
    pub fine: CellKey,
    pub face: Face,
    pub coarse: CellKey,
    /// Endpoints of the coarse edge.
    pub ends: [IPoint; 2],
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct BoundaryEdge {
    pub cell: CellKey,
    pub face: Face,
    pub ends: [IPoint; 2],
    pub marker: BoundaryMarker,
}

#[derive(Clone, Debug)]
pub struct QuadMesh {
    forest: Arc<Forest>,
    refined: HashSet<CellKey>,
    leaf_set: HashSet<CellKey>,
    leaves: Vec<CellKey>,
}

impl QuadMesh {
    /// Unrefined mesh consisting of the forest's roots.
    pub fn from_forest(forest: Forest) -> Self {
        let leaf_set = forest
            .roots
            .iter()
            .map(|&(i, j)| CellKey::root(i, j))
            .collect();
        let mut mesh = Self {
            forest: Arc::new(forest),
            refined: HashSet::new(),
            leaf_set,
            leaves: Vec::new(),
        };
        mesh.rebuild_order();
        mesh
    }

    /// The L-shaped panel: three 250 mm roots refined `n_uniform` times.
    pub fn lshape(n_uniform: usize) -> Self {
        let mut mesh = Self::from_forest(Forest::lshape());
        for _ in 0..n_uniform {
            mesh = mesh.refine_uniform();
        }
        mesh
    }

    /// Rectangle tiled by `nx * ny` roots of side `root_size`, refined `n_uniform` times.
    pub fn rectangle(origin: [f64; 2], root_size: f64, nx: i64, ny: i64, n_uniform: usize) -> Self {
        let mut mesh = Self::from_forest(Forest::rectangle(origin, root_size, nx, ny));
        for _ in 0..n_uniform {
            mesh = mesh.refine_uniform();
        }
        mesh
    }

    pub fn forest(&self) -> &Forest {
        &self.forest
    }

    pub fn same_forest(&self, other: &QuadMesh) -> bool {
        Arc::ptr_eq(&self.forest, &other.forest) || *self.forest == *other.forest
    }

    /// Leaves in depth-first order over the roots.
    pub fn leaves(&self) -> &[CellKey] {
        &self.leaves
    }

    pub fn num_leaves(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_leaf(&self, key: &CellKey) -> bool {
        self.leaf_set.contains(key)
    }

    pub fn is_refined(&self, key: &CellKey) -> bool {
        self.refined.contains(key)
    }

    pub fn cell_box(&self, key: &CellKey) -> CellBox {
        let lo = self.forest.to_phys(key.lower());
        CellBox {
            x0: lo[0],
            y0: lo[1],
            size: self.forest.length(key.size()),
        }
    }

    pub fn to_phys(&self, p: IPoint) -> [f64; 2] {
        self.forest.to_phys(p)
    }

    pub fn max_level(&self) -> u8 {
        self.leaves.iter().map(|c| c.level).max().unwrap_or(0)
    }

    pub fn min_cell_size(&self) -> f64 {
        self.forest.length(1i64 << (MAX_LEVEL - self.max_level()))
    }

    pub fn total_area(&self) -> f64 {
        self.leaves.iter().map(|c| self.cell_box(c).area()).sum()
    }

    fn rebuild_order(&mut self) {
        let mut out = Vec::with_capacity(self.leaf_set.len());
        let mut stack: Vec<CellKey> = self
            .forest
            .roots
            .iter()
            .rev()
            .map(|&(i, j)| CellKey::root(i, j))
            .collect();
        while let Some(c) = stack.pop() {
            if self.refined.contains(&c) {
                stack.extend(c.children().iter().rev());
            } else {
                out.push(c);
            }
        }
        self.leaves = out;
    }

    fn in_forest(&self, key: &CellKey) -> bool {
        self.leaf_set.contains(key) || self.refined.contains(key)
    }

    /// Leaves across `face` of a leaf `cell`.
    pub fn neighbors(&self, cell: &CellKey, face: Face) -> Neighbors {
        let (dx, dy) = face.offset();
        let nk = CellKey {
            level: cell.level,
            ix: cell.ix + dx,
            iy: cell.iy + dy,
        };
        if self.leaf_set.contains(&nk) {
            return Neighbors::Single(nk);
        }
        if self.refined.contains(&nk) {
            let mut out = Vec::new();
            self.collect_face_leaves(nk, face.opposite(), &mut out);
            return Neighbors::Finer(out);
        }
        let mut k = nk.parent();
        while let Some(p) = k {
            if self.leaf_set.contains(&p) {
                return Neighbors::Single(p);
            }
            if self.refined.contains(&p) {
                break;
            }
            k = p.parent();
        }
        Neighbors::Boundary
    }

    fn collect_face_leaves(&self, key: CellKey, face: Face, out: &mut Vec<CellKey>) {
        if self.leaf_set.contains(&key) {
            out.push(key);
            return;
        }
        let ch = key.children();
        for i in face.children_on() {
            self.collect_face_leaves(ch[i], face, out);
        }
    }

    /// Index of a leaf containing the lattice point (closed cells), if any.
    pub fn locate(&self, p: IPoint) -> Option<CellKey> {
        for &(i, j) in &self.forest.roots {
            let mut c = CellKey::root(i, j);
            if !c.contains(p) {
                continue;
            }
            loop {
                if self.leaf_set.contains(&c) {
                    return Some(c);
                }
                match c.children().into_iter().find(|k| k.contains(p)) {
                    Some(k) => c = k,
                    None => break,
                }
            }
        }
        None
    }

    /// Locates a physical point; the point is snapped to the lattice.
    pub fn locate_phys(&self, x: [f64; 2]) -> Option<(CellKey, [f64; 2])> {
        let u = self.forest.unit();
        let p = IPoint::new(
            ((x[0] - self.forest.origin[0]) / u).round() as i64,
            ((x[1] - self.forest.origin[1]) / u).round() as i64,
        );
        let cell = self.locate(p)?;
        let b = self.cell_box(&cell);
        let xi = [(x[0] - b.x0) / b.size, (x[1] - b.y0) / b.size];
        Some((cell, [xi[0].clamp(0.0, 1.0), xi[1].clamp(0.0, 1.0)]))
    }

    /// Splits every leaf once.
    pub fn refine_uniform(&self) -> QuadMesh {
        let all: Vec<CellKey> = self.leaves.clone();
        self.refine(&all)
    }

    /// Splits the marked leaves plus whatever closure is needed to keep the
    /// mesh 1-irregular. Keys that are not leaves are ignored.
    pub fn refine(&self, marked: &[CellKey]) -> QuadMesh {
        let mut work = self.clone();
        let mut sorted: Vec<CellKey> = marked
            .iter()
            .copied()
            .filter(|c| self.leaf_set.contains(c))
            .collect();
        sorted.sort();
        sorted.dedup();
        let mut stack: Vec<CellKey> = sorted.into_iter().rev().collect();
        while let Some(c) = stack.pop() {
            if !work.leaf_set.contains(&c) || c.level + 1 >= MAX_LEVEL {
                continue;
            }
            let coarser: Vec<CellKey> = Face::ALL
                .iter()
                .filter_map(|&f| match work.neighbors(&c, f) {
                    Neighbors::Single(n) if n.level < c.level => Some(n),
                    _ => None,
                })
                .collect();
            if coarser.is_empty() {
                work.leaf_set.remove(&c);
                work.refined.insert(c);
                for k in c.children() {
                    work.leaf_set.insert(k);
                }
            } else {
                stack.push(c);
                stack.extend(coarser);
            }
        }
        work.rebuild_order();
        work
    }

    /// Mesh whose leaves are the cell-wise intersection of both meshes.
    pub fn common_refinement(&self, other: &QuadMesh) -> Option<QuadMesh> {
        if !self.same_forest(other) {
            return None;
        }
        let refined: HashSet<CellKey> = self.refined.union(&other.refined).copied().collect();
        let mut leaf_set = HashSet::new();
        for c in self.leaves.iter().chain(other.leaves.iter()) {
            if !refined.contains(c) {
                leaf_set.insert(*c);
            }
        }
        let mut mesh = QuadMesh {
            forest: self.forest.clone(),
            refined,
            leaf_set,
            leaves: Vec::new(),
        };
        mesh.rebuild_order();
        Some(mesh)
    }

    /// True when every leaf of `self` lies inside some leaf of `coarse`.
    pub fn refines(&self, coarse: &QuadMesh) -> bool {
        self.same_forest(coarse) && coarse.refined.iter().all(|c| self.refined.contains(c))
    }

    /// Fine faces whose neighbour across is one level coarser.
    pub fn coarse_interfaces(&self) -> Vec<CoarseInterface> {
        let mut out = Vec::new();
        for c in &self.leaves {
            for f in Face::ALL {
                if let Neighbors::Single(n) = self.neighbors(c, f) {
                    if n.level < c.level {
                        out.push(CoarseInterface {
                            fine: *c,
                            face: f,
                            coarse: n,
                            ends: n.face_endpoints(f.opposite()),
                        });
                    }
                }
            }
        }
        out
    }

    /// Every vertex in the interior of a coarser neighbour's edge, sorted.
    pub fn hanging_vertices(&self) -> Vec<HangingVertex> {
        let mut map = BTreeMap::new();
        for ci in self.coarse_interfaces() {
            let mid = IPoint::midpoint(ci.ends[0], ci.ends[1]);
            map.insert(mid, ci.ends);
        }
        map.into_iter()
            .map(|(vertex, ends)| HangingVertex { vertex, ends })
            .collect()
    }

    pub fn boundary_edges(&self) -> Vec<BoundaryEdge> {
        let mut out = Vec::new();
        for c in &self.leaves {
            for f in Face::ALL {
                if self.neighbors(c, f) == Neighbors::Boundary {
                    let ends = c.face_endpoints(f);
                    let mid = IPoint::midpoint(ends[0], ends[1]);
                    out.push(BoundaryEdge {
                        cell: *c,
                        face: f,
                        ends,
                        marker: self.forest.classify(self.to_phys(mid)),
                    });
                }
            }
        }
        out
    }

    /// True when the lattice index lies under one of the roots.
    pub fn key_in_domain(&self, key: &CellKey) -> bool {
        let shift = key.level;
        self.forest.has_root(key.ix >> shift, key.iy >> shift)
    }

    /// Maximum level jump across any leaf face.
    pub fn max_level_jump(&self) -> u8 {
        let mut jump = 0;
        for c in &self.leaves {
            for f in Face::ALL {
                let others = match self.neighbors(c, f) {
                    Neighbors::Boundary => vec![],
                    Neighbors::Single(n) => vec![n],
                    Neighbors::Finer(v) => v,
                };
                for n in others {
                    jump = jump.max(n.level.abs_diff(c.level));
                }
            }
        }
        jump
    }

    /// The leaf of `self` that contains the leaf `fine` of a refinement.
    pub fn ancestor_leaf(&self, fine: &CellKey) -> Option<CellKey> {
        let mut k = Some(*fine);
        while let Some(c) = k {
            if self.leaf_set.contains(&c) {
                debug_assert!(c.is_ancestor_of(fine));
                return Some(c);
            }
            k = c.parent();
        }
        None
    }

    #[doc(hidden)]
    pub fn in_forest_key(&self, key: &CellKey) -> bool {
        self.in_forest(key)
    }
}
