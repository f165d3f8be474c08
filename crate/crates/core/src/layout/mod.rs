//! Macro/small-cell geometry and level-1 PON tree structure.

mod ring;

use serde::{Deserialize, Serialize};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::latency::TrafficProfile;
use crate::traffic::{RuProfile, Split};

pub use ring::{held_karp_tour, heuristic_tour, ring_order, tour_length, RingOrder, HELD_KARP_LIMIT};

/// Default ratio of fiber route length to straight-line distance.
pub const DEFAULT_DETOUR: f64 = 1.4;

const SEPARATION_RETRIES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Rectangle `[0, width] × [0, height]` in km.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Area {
    pub width: f64,
    pub height: f64,
}

impl Area {
    fn validate(&self) -> Result<()> {
        if !(self.width > 0.0 && self.height > 0.0) || !self.width.is_finite() || !self.height.is_finite() {
            return Err(Error::param("area must have positive width and height"));
        }
        Ok(())
    }
}

/// A macro cell site; it roots the level-1 PON tree with the same id and may host a MEC node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacroSite {
    pub id: usize,
    pub position: Point,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Node {
    Macro(usize),
    Small(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    area: Area,
    macros: Vec<MacroSite>,
    smalls: Vec<RuProfile>,
    tree_members: Vec<Vec<usize>>,
    detour: f64,
    /// `ru_to_tree[r][t]`: fiber km from RU `r` to the macro site of tree `t`.
    ru_to_tree: Vec<Vec<f64>>,
    /// `tree_to_tree[a][b]`: fiber km between macro sites.
    tree_to_tree: Vec<Vec<f64>>,
}

impl Layout {
    /// Builds a layout from explicit RUs whose `tree_id` is already set.
    pub fn new(area: Area, macro_points: Vec<Point>, smalls: Vec<RuProfile>, detour: f64) -> Result<Self> {
        area.validate()?;
        if macro_points.is_empty() {
            return Err(Error::param("layout needs at least one macro site"));
        }
        if !(detour > 0.0) || !detour.is_finite() {
            return Err(Error::param("detour factor must be > 0"));
        }
        let macros: Vec<MacroSite> = macro_points
            .into_iter()
            .enumerate()
            .map(|(id, position)| MacroSite { id, position })
            .collect();
        let mut tree_members = vec![Vec::new(); macros.len()];
        for (idx, ru) in smalls.iter().enumerate() {
            ru.validate()?;
            if ru.id != idx {
                return Err(Error::param(format!("small cell at index {idx} has id {}", ru.id)));
            }
            tree_members
                .get_mut(ru.tree_id)
                .ok_or_else(|| Error::param(format!("RU {} names unknown tree {}", ru.id, ru.tree_id)))?
                .push(ru.id);
        }
        let ru_to_tree = smalls
            .iter()
            .map(|ru| macros.iter().map(|m| ru.position.dist(&m.position) * detour).collect())
            .collect();
        let tree_to_tree = macros
            .iter()
            .map(|a| macros.iter().map(|b| a.position.dist(&b.position) * detour).collect())
            .collect();
        Ok(Layout {
            area,
            macros,
            smalls,
            tree_members,
            detour,
            ru_to_tree,
            tree_to_tree,
        })
    }

    /// Builds a layout assigning each small cell to its nearest macro site.
    pub fn with_voronoi_trees(
        area: Area,
        macro_points: Vec<Point>,
        small_cells: &[(Point, Split)],
        traffic: &TrafficProfile,
        detour: f64,
    ) -> Result<Self> {
        if macro_points.is_empty() {
            return Err(Error::param("layout needs at least one macro site"));
        }
        let smalls = small_cells
            .iter()
            .enumerate()
            .map(|(id, &(position, split))| RuProfile {
                position,
                tree_id: nearest_site(&macro_points, &position),
                ..traffic.ru(id, split)
            })
            .collect();
        Layout::new(area, macro_points, smalls, detour)
    }

    pub fn area(&self) -> Area {
        self.area
    }

    pub fn macros(&self) -> &[MacroSite] {
        &self.macros
    }

    pub fn macro_site(&self, tree: usize) -> Option<&MacroSite> {
        self.macros.get(tree)
    }

    pub fn smalls(&self) -> &[RuProfile] {
        &self.smalls
    }

    pub fn small(&self, id: usize) -> Option<&RuProfile> {
        self.smalls.get(id)
    }

    pub fn tree_count(&self) -> usize {
        self.macros.len()
    }

    pub fn ru_count(&self) -> usize {
        self.smalls.len()
    }

    pub fn tree_members(&self, tree: usize) -> &[usize] {
        &self.tree_members[tree]
    }

    pub fn detour(&self) -> f64 {
        self.detour
    }

    fn position(&self, node: Node) -> Result<Point> {
        match node {
            Node::Macro(i) => self.macros.get(i).map(|m| m.position),
            Node::Small(i) => self.smalls.get(i).map(|s| s.position),
        }
        .ok_or_else(|| Error::Lookup(format!("{node:?}")))
    }

    /// Straight-line distance scaled by the routing detour factor (km).
    pub fn fiber_distance(&self, a: Node, b: Node) -> Result<f64> {
        match (a, b) {
            (Node::Small(r), Node::Macro(t)) | (Node::Macro(t), Node::Small(r))
                if r < self.smalls.len() && t < self.macros.len() =>
            {
                Ok(self.ru_to_tree[r][t])
            }
            (Node::Macro(s), Node::Macro(t)) if s < self.macros.len() && t < self.macros.len() => {
                Ok(self.tree_to_tree[s][t])
            }
            _ => Ok(self.position(a)?.dist(&self.position(b)?) * self.detour),
        }
    }

    /// The `w` trees closest to `tree` by macro-to-macro fiber distance, self first.
    pub fn k_nearest_trees(&self, tree: usize, w: usize) -> Vec<usize> {
        let mut others: Vec<usize> = (0..self.macros.len()).filter(|&t| t != tree).collect();
        others.sort_by(|&a, &b| {
            self.tree_to_tree[tree][a]
                .total_cmp(&self.tree_to_tree[tree][b])
                .then(a.cmp(&b))
        });
        std::iter::once(tree)
            .chain(others)
            .take(w.max(1))
            .collect()
    }

    pub fn neighbor_sets(&self, w: usize) -> NeighborSets {
        NeighborSets((0..self.macros.len()).map(|t| self.k_nearest_trees(t, w)).collect())
    }

    pub fn to_doc(&self) -> LayoutDoc {
        LayoutDoc {
            area: self.area,
            macros: self
                .macros
                .iter()
                .map(|m| MacroDoc {
                    id: m.id,
                    x: m.position.x,
                    y: m.position.y,
                })
                .collect(),
            smalls: self
                .smalls
                .iter()
                .map(|s| SmallDoc {
                    id: s.id,
                    x: s.position.x,
                    y: s.position.y,
                    split: s.split,
                    m: s.m,
                    tree: s.tree_id,
                    gamma: Some(s.gamma),
                    nu: Some(s.nu),
                })
                .collect(),
        }
    }

    /// Rebuilds a layout from its document form. RUs without call rates take them from `traffic`.
    pub fn from_doc(doc: &LayoutDoc, traffic: &TrafficProfile, detour: f64) -> Result<Self> {
        for (i, m) in doc.macros.iter().enumerate() {
            if m.id != i {
                return Err(Error::param(format!("macro at index {i} has id {}", m.id)));
            }
        }
        let smalls = doc
            .smalls
            .iter()
            .map(|s| RuProfile {
                id: s.id,
                split: s.split,
                m: s.m,
                gamma: s.gamma.unwrap_or(traffic.gamma),
                nu: s.nu.unwrap_or(traffic.nu),
                position: Point::new(s.x, s.y),
                tree_id: s.tree,
            })
            .collect();
        let macros = doc.macros.iter().map(|m| Point::new(m.x, m.y)).collect();
        Layout::new(doc.area, macros, smalls, detour)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_doc())?)
    }

    pub fn from_json(json: &str, traffic: &TrafficProfile, detour: f64) -> Result<Self> {
        let doc: LayoutDoc = serde_json::from_str(json)?;
        Layout::from_doc(&doc, traffic, detour)
    }
}

/// Index of the site nearest to `p`; ties go to the lower index.
pub fn nearest_site(sites: &[Point], p: &Point) -> usize {
    sites
        .iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| a.dist(p).total_cmp(&b.dist(p)).then(i.cmp(j)))
        .map(|(i, _)| i)
        .expect("at least one site")
}

/// For every tree, the trees an RU homed there may be served from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborSets(pub Vec<Vec<usize>>);

impl NeighborSets {
    pub fn of(&self, tree: usize) -> &[usize] {
        &self.0[tree]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// JSON document form of a [`Layout`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutDoc {
    pub area: Area,
    pub macros: Vec<MacroDoc>,
    pub smalls: Vec<SmallDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MacroDoc {
    pub id: usize,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmallDoc {
    pub id: usize,
    pub x: f64,
    pub y: f64,
    pub split: Split,
    pub m: u32,
    pub tree: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
}

/// Parameters for synthetic layout generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutParams {
    pub seed: u64,
    pub n_macro: usize,
    pub smalls_per_macro_mean: f64,
    pub area: Area,
    /// Probability that a small cell's RU uses split 7.1.
    pub split71_fraction: f64,
    /// Minimum macro-to-macro spacing (km). Defaults to half the mean spacing.
    pub min_separation_km: Option<f64>,
}

impl Default for LayoutParams {
    fn default() -> Self {
        LayoutParams {
            seed: 1,
            n_macro: 4,
            smalls_per_macro_mean: 4.0,
            area: Area {
                width: 4.0,
                height: 4.0,
            },
            split71_fraction: 0.5,
            min_separation_km: None,
        }
    }
}

/// Seeded synthetic layout: macros by uniform sampling with a minimum spacing,
/// small cells scattered uniformly and homed on their nearest macro.
pub fn generate_layout(params: &LayoutParams, traffic: &TrafficProfile, detour: f64) -> Result<Layout> {
    params.area.validate()?;
    if params.n_macro == 0 {
        return Err(Error::param("n_macro must be >= 1"));
    }
    if !(params.smalls_per_macro_mean >= 0.0) {
        return Err(Error::param("smalls_per_macro_mean must be >= 0"));
    }
    if !(0.0..=1.0).contains(&params.split71_fraction) {
        return Err(Error::param("split71_fraction must lie in [0, 1]"));
    }
    let Area { width, height } = params.area;
    let min_sep = params
        .min_separation_km
        .unwrap_or_else(|| 0.5 * (width * height / params.n_macro as f64).sqrt());
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let uniform_point = |rng: &mut ChaCha8Rng| {
        Point::new(rng.random_range(0.0..=width), rng.random_range(0.0..=height))
    };

    let mut macros: Vec<Point> = Vec::with_capacity(params.n_macro);
    for i in 0..params.n_macro {
        let placed = (0..SEPARATION_RETRIES)
            .map(|_| uniform_point(&mut rng))
            .find(|p| macros.iter().all(|q| q.dist(p) >= min_sep));
        match placed {
            Some(p) => macros.push(p),
            None => {
                return Err(Error::Generation(format!(
                    "could not place macro {i} at least {min_sep:.3} km from the others"
                )))
            }
        }
    }

    let expected = params.smalls_per_macro_mean * params.n_macro as f64;
    let count = if expected > 0.0 {
        let poisson = Poisson::new(expected).map_err(|e| Error::Generation(e.to_string()))?;
        (poisson.sample(&mut rng) as usize).max(1)
    } else {
        0
    };
    let cells: Vec<(Point, Split)> = (0..count)
        .map(|_| {
            let p = uniform_point(&mut rng);
            let split = if rng.random_bool(params.split71_fraction) {
                Split::Split71
            } else {
                Split::Split72
            };
            (p, split)
        })
        .collect();
    Layout::with_voronoi_trees(params.area, macros, &cells, traffic, detour)
}
