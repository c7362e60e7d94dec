//! Building model read off a labeling: rooms, walls, wall intersections and
//! their adjacency, with mesh and JSON exports.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::candidates::{CandidateSet, WallKind};
use crate::complex::CellComplex;
use crate::geom::{Vec2, Vec3};
use crate::ilp::CellLabels;

pub const SCHEMA_VERSION: u32 = 1;

pub type Polygon = Vec<[f64; 3]>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub id: usize,
    pub cells: Vec<usize>,
    pub volume: f64,
    /// Face-connected components; more than one is reported as a warning.
    pub components: usize,
    pub boundary: Vec<Polygon>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfacePlane {
    pub normal: [f64; 3],
    pub offset: f64,
    pub is_virtual: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Wall {
    pub id: usize,
    pub kind: WallKind,
    /// Direction along a vertical wall, the normal of a slab.
    pub axis: [f64; 3],
    pub thickness: f64,
    pub surfaces: [SurfacePlane; 2],
    pub cells: Vec<usize>,
    pub volume: f64,
    pub boundary: Vec<Polygon>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intersection {
    pub walls: Vec<usize>,
    pub cells: Vec<usize>,
    pub volume: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Adjacency {
    pub room_wall: Vec<(usize, usize)>,
    pub wall_wall: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildingModel {
    pub schema_version: u32,
    pub rooms: Vec<Room>,
    pub walls: Vec<Wall>,
    pub intersections: Vec<Intersection>,
    pub adjacency: Adjacency,
    pub outside_volume: f64,
    pub bbox_volume: f64,
    pub warnings: Vec<String>,
}

impl BuildingModel {
    pub fn empty() -> Self {
        BuildingModel {
            schema_version: SCHEMA_VERSION,
            rooms: Vec::new(),
            walls: Vec::new(),
            intersections: Vec::new(),
            adjacency: Adjacency::default(),
            outside_volume: 0.0,
            bbox_volume: 0.0,
            warnings: Vec::new(),
        }
    }

    pub fn room(&self, id: usize) -> Option<&Room> {
        self.rooms.iter().find(|r| r.id == id)
    }

    pub fn wall(&self, id: usize) -> Option<&Wall> {
        self.walls.iter().find(|w| w.id == id)
    }

    /// Walls touching neither a room nor another wall.
    pub fn free_walls(&self) -> Vec<usize> {
        self.walls
            .iter()
            .map(|w| w.id)
            .filter(|&w| {
                !self.adjacency.room_wall.iter().any(|e| e.1 == w)
                    && !self.adjacency.wall_wall.iter().any(|e| e.0 == w || e.1 == w)
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }
}

fn p3(v: Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

/// Outward boundary polygons of a set of cells, counter-clockwise seen from
/// outside. The sides of the complex's box count as boundary.
pub fn cell_set_boundary(complex: &CellComplex, cells: &BTreeSet<usize>) -> Vec<Polygon> {
    let nz = complex.nz();
    let mut edge_of: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for e in &complex.arrangement.edges {
        edge_of.insert(e.vertices, e.faces.clone());
    }
    let mut out = Vec::new();
    for &c in cells {
        let cell = &complex.cells[c];
        let (f, zi) = (cell.face2d, cell.zi);
        let ids = &complex.arrangement.faces[f];
        let poly = &complex.face_polygons[f];
        let (z0, z1) = cell.z;
        for i in 0..poly.len() {
            let j = (i + 1) % poly.len();
            let key = (ids[i].min(ids[j]), ids[i].max(ids[j]));
            let across = edge_of[&key].iter().copied().find(|&g| g != f).map(|g| g * nz + zi);
            if across.is_some_and(|n| cells.contains(&n)) {
                continue;
            }
            let (a, b) = (poly[i], poly[j]);
            out.push(vec![[a.x, a.y, z0], [b.x, b.y, z0], [b.x, b.y, z1], [a.x, a.y, z1]]);
        }
        if zi == 0 || !cells.contains(&(c - 1)) {
            out.push(poly.iter().rev().map(|p| [p.x, p.y, z0]).collect());
        }
        if zi + 1 == nz || !cells.contains(&(c + 1)) {
            out.push(poly.iter().map(|p| [p.x, p.y, z1]).collect());
        }
    }
    out
}

struct Components(Vec<usize>);

impl Components {
    fn find(&mut self, mut i: usize) -> usize {
        while self.0[i] != i {
            self.0[i] = self.0[self.0[i]];
            i = self.0[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (a, b) = (self.find(a), self.find(b));
        if a != b {
            self.0[a.max(b)] = a.min(b);
        }
    }
}

pub fn extract(labels: &CellLabels, complex: &CellComplex, candidates: &CandidateSet) -> BuildingModel {
    let n = complex.cells.len();
    let mut model = BuildingModel::empty();
    model.bbox_volume = complex.total_volume();

    let mut uf = Components((0..n).collect());
    for f in &complex.faces {
        if let (Some(a), Some(b)) = (labels.room(f.ca), labels.room(f.cb)) {
            if a == b {
                uf.union(f.ca, f.cb);
            }
        }
    }
    let mut room_cells: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    let mut wall_cells: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for c in 0..n {
        if let Some(r) = labels.room(c) {
            room_cells.entry(r).or_default().insert(c);
        } else {
            model.outside_volume += complex.cells[c].volume;
        }
        for &w in &labels.walls[c] {
            wall_cells.entry(w).or_default().insert(c);
        }
    }
    for (&r, cells) in &room_cells {
        let components = cells.iter().map(|&c| uf.find(c)).collect::<BTreeSet<_>>().len();
        if components > 1 {
            model.warnings.push(format!("room {r} has {components} disconnected parts"));
        }
        model.rooms.push(Room {
            id: r,
            cells: cells.iter().copied().collect(),
            volume: cells.iter().map(|&c| complex.cells[c].volume).sum(),
            components,
            boundary: cell_set_boundary(complex, cells),
        });
    }
    for (&w, cells) in &wall_cells {
        let cand = &candidates.walls[w];
        let (sa, sb) = (&candidates.surfaces[cand.surface_a], &candidates.surfaces[cand.surface_b]);
        let n = sa.normal();
        let axis = match cand.kind {
            WallKind::Vertical => Vec3::z().cross(&n).normalize(),
            WallKind::Horizontal => n,
        };
        let plane = |s: &crate::candidates::SurfaceCandidate| SurfacePlane {
            normal: p3(s.normal()),
            offset: s.offset(),
            is_virtual: s.is_virtual,
        };
        model.walls.push(Wall {
            id: w,
            kind: cand.kind,
            axis: p3(axis),
            thickness: cand.thickness,
            surfaces: [plane(sa), plane(sb)],
            cells: cells.iter().copied().collect(),
            volume: cells.iter().map(|&c| complex.cells[c].volume).sum(),
            boundary: cell_set_boundary(complex, cells),
        });
    }

    let mut shared: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
    for c in 0..n {
        if labels.walls[c].len() >= 2 {
            let mut ws = labels.walls[c].clone();
            ws.sort_unstable();
            shared.entry(ws).or_default().push(c);
        }
    }
    let mut iuf = Components((0..n).collect());
    for f in &complex.faces {
        if labels.walls[f.ca].len() >= 2 && {
            let (mut a, mut b) = (labels.walls[f.ca].clone(), labels.walls[f.cb].clone());
            a.sort_unstable();
            b.sort_unstable();
            a == b
        } {
            iuf.union(f.ca, f.cb);
        }
    }
    let mut ww = BTreeSet::new();
    for (ws, cells) in shared {
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for c in cells {
            groups.entry(iuf.find(c)).or_default().push(c);
        }
        for cells in groups.into_values() {
            model.intersections.push(Intersection {
                walls: ws.clone(),
                volume: cells.iter().map(|&c| complex.cells[c].volume).sum(),
                cells,
            });
        }
        for i in 0..ws.len() {
            for j in i + 1..ws.len() {
                ww.insert((ws[i], ws[j]));
            }
        }
    }
    let mut rw = BTreeSet::new();
    for f in &complex.faces {
        if let (Some(r), true) = (labels.room(f.ca), labels.outside[f.cb]) {
            for w in &f.boundary_walls {
                if labels.walls[f.cb].contains(w) {
                    rw.insert((r, *w));
                }
            }
        }
    }
    model.adjacency = Adjacency {
        room_wall: rw.into_iter().collect(),
        wall_wall: ww.into_iter().collect(),
    };
    for w in model.free_walls() {
        model.warnings.push(format!("wall {w} touches no room and no other wall"));
    }
    model
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MeshSelection {
    Rooms,
    Walls,
    All,
    Room(usize),
    Wall(usize),
}

impl std::str::FromStr for MeshSelection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "rooms" => Ok(MeshSelection::Rooms),
            "walls" => Ok(MeshSelection::Walls),
            "all" => Ok(MeshSelection::All),
            _ => {
                let parse = |p: &str| p.parse::<usize>().map_err(|_| format!("unknown mesh entity `{s}`"));
                if let Some(r) = s.strip_prefix("room_") {
                    Ok(MeshSelection::Room(parse(r)?))
                } else if let Some(w) = s.strip_prefix("wall_") {
                    Ok(MeshSelection::Wall(parse(w)?))
                } else {
                    Err(format!("unknown mesh entity `{s}`"))
                }
            }
        }
    }
}

/// Named polygon groups for a selection; `None` if an entity is missing.
pub fn select<'a>(model: &'a BuildingModel, what: &MeshSelection) -> Option<Vec<(String, &'a [Polygon])>> {
    let rooms = model.rooms.iter().map(|r| (format!("room_{}", r.id), r.boundary.as_slice()));
    let walls = model.walls.iter().map(|w| (format!("wall_{}", w.id), w.boundary.as_slice()));
    Some(match what {
        MeshSelection::Rooms => rooms.collect(),
        MeshSelection::Walls => walls.collect(),
        MeshSelection::All => rooms.chain(walls).collect(),
        MeshSelection::Room(id) => vec![(format!("room_{id}"), model.room(*id)?.boundary.as_slice())],
        MeshSelection::Wall(id) => vec![(format!("wall_{id}"), model.wall(*id)?.boundary.as_slice())],
    })
}

fn fan(poly: &Polygon) -> impl Iterator<Item = [usize; 3]> + '_ {
    (1..poly.len().saturating_sub(1)).map(|i| [0, i, i + 1])
}

/// Wavefront OBJ, one object per entity, fan-triangulated.
pub fn export_obj(model: &BuildingModel, what: &MeshSelection) -> Option<String> {
    let groups = select(model, what)?;
    let mut out = String::from("# building model\n");
    let mut next = 1usize;
    for (name, polys) in groups {
        let _ = writeln!(out, "o {name}");
        let mut index: HashMap<[u64; 3], usize> = HashMap::new();
        let mut faces = Vec::new();
        for poly in polys {
            let ids: Vec<usize> = poly
                .iter()
                .map(|p| {
                    let key = [p[0].to_bits(), p[1].to_bits(), p[2].to_bits()];
                    *index.entry(key).or_insert_with(|| {
                        let _ = writeln!(out, "v {} {} {}", p[0], p[1], p[2]);
                        next += 1;
                        next - 1
                    })
                })
                .collect();
            faces.extend(fan(poly).map(|t| [ids[t[0]], ids[t[1]], ids[t[2]]]));
        }
        for t in faces {
            let _ = writeln!(out, "f {} {} {}", t[0], t[1], t[2]);
        }
    }
    Some(out)
}

/// Little-endian `u32` triangle count followed by nine `f32` per triangle.
pub fn export_binary(model: &BuildingModel, what: &MeshSelection) -> Option<Vec<u8>> {
    let groups = select(model, what)?;
    let tris: Vec<[[f64; 3]; 3]> = groups
        .iter()
        .flat_map(|(_, polys)| polys.iter())
        .flat_map(|poly| fan(poly).map(move |t| [poly[t[0]], poly[t[1]], poly[t[2]]]))
        .collect();
    let mut out = Vec::with_capacity(4 + tris.len() * 36);
    out.extend_from_slice(&(tris.len() as u32).to_le_bytes());
    for t in &tris {
        for v in t {
            for x in v {
                out.extend_from_slice(&(*x as f32).to_le_bytes());
            }
        }
    }
    Some(out)
}

/// Triangles of a binary mesh buffer.
pub fn read_binary(buf: &[u8]) -> Option<Vec<[[f32; 3]; 3]>> {
    let n = u32::from_le_bytes(buf.get(..4)?.try_into().ok()?) as usize;
    if buf.len() != 4 + n * 36 {
        return None;
    }
    let f = |i: usize| f32::from_le_bytes(buf[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    Some((0..n).map(|t| std::array::from_fn(|v| std::array::from_fn(|k| f(t * 9 + v * 3 + k)))).collect())
}

/// Signed volume enclosed by outward polygons.
pub fn enclosed_volume(polys: &[Polygon]) -> f64 {
    let mut v = 0.0;
    for poly in polys {
        for t in fan(poly) {
            let (a, b, c) = (Vec3::from(poly[t[0]]), Vec3::from(poly[t[1]]), Vec3::from(poly[t[2]]));
            v += a.dot(&b.cross(&c)) / 6.0;
        }
    }
    v
}

/// Centroid of a room's footprint, for reporting.
pub fn room_center(complex: &CellComplex, room: &Room) -> Vec3 {
    let mut acc = Vec3::zeros();
    for &c in &room.cells {
        acc += complex.cell_center(c) * complex.cells[c].volume;
    }
    acc / room.volume
}

pub fn footprint_area(complex: &CellComplex, cells: &[usize]) -> f64 {
    let faces: BTreeSet<usize> = cells.iter().map(|&c| complex.cells[c].face2d).collect();
    faces
        .iter()
        .map(|&f| crate::geom::polygon_area(&complex.face_polygons[f]).abs())
        .sum()
}

pub fn xy(p: &[f64; 3]) -> Vec2 {
    Vec2::new(p[0], p[1])
}
