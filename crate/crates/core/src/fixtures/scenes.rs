//! Heightfield part models built from blended pockets and bosses.
//!
//! Every scene is an open-top block surface `z = f(x, y)` sampled on a regular
//! grid. Walls are steep offsets of rounded-rectangle footprints; polynomial
//! smooth min/max produce fillet bands where walls meet floors and tops, which
//! the angle segmentation picks up as transition features. Walls always grow
//! outward from the footprint so they stay free of medial-axis creases.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{heightfield, Soup};

/// Default wall slope (rise over run), about 68 degrees.
pub const WALL_SLOPE: f64 = 2.5;

pub fn smin(a: f64, b: f64, k: f64) -> f64 {
    if k <= 0.0 {
        return a.min(b);
    }
    let h = (k - (a - b).abs()).max(0.0) / k;
    a.min(b) - h * h * k * 0.25
}

pub fn smax(a: f64, b: f64, k: f64) -> f64 {
    -smin(-a, -b, k)
}

/// Rounded rectangle in the xy plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Footprint {
    pub cx: f64,
    pub cy: f64,
    pub hx: f64,
    pub hy: f64,
    pub radius: f64,
}

impl Footprint {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64, radius: f64) -> Self {
        Footprint { cx: 0.5 * (x0 + x1), cy: 0.5 * (y0 + y1), hx: 0.5 * (x1 - x0), hy: 0.5 * (y1 - y0), radius }
    }

    /// Distance inside the footprint (negative outside).
    pub fn depth_inside(&self, x: f64, y: f64) -> f64 {
        let qx = (x - self.cx).abs() - (self.hx - self.radius);
        let qy = (y - self.cy).abs() - (self.hy - self.radius);
        let outside = (qx.max(0.0).powi(2) + qy.max(0.0).powi(2)).sqrt();
        let sdf = outside + qx.max(qy).min(0.0) - self.radius;
        -sdf
    }

    /// Signed distance, positive outside.
    pub fn sdf(&self, x: f64, y: f64) -> f64 {
        -self.depth_inside(x, y)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.depth_inside(x, y) > 0.0
    }

    pub fn grown(&self, by: f64) -> Footprint {
        Footprint { hx: self.hx + by, hy: self.hy + by, radius: self.radius + by, ..*self }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SceneOp {
    /// Sinks the surface to `floor` over the footprint; the wall climbs
    /// outward from the footprint border up to `top`.
    Pocket { footprint: Footprint, top: f64, floor: f64, rim_blend: f64, foot_blend: f64 },
    /// Raises the surface to `top` over the footprint; the wall drops
    /// outward from the footprint border down to `base`.
    Boss { footprint: Footprint, base: f64, top: f64, rim_blend: f64, foot_blend: f64 },
}

impl SceneOp {
    fn apply(&self, z: f64, x: f64, y: f64, slope: f64) -> f64 {
        match *self {
            SceneOp::Pocket { footprint, floor, rim_blend, foot_blend, .. } => {
                let wall = floor + slope * footprint.sdf(x, y);
                smin(z, smax(floor, wall, foot_blend), rim_blend)
            }
            SceneOp::Boss { footprint, top, rim_blend, foot_blend, .. } => {
                let wall = top - slope * footprint.sdf(x, y);
                smax(z, smin(top, wall, rim_blend), foot_blend)
            }
        }
    }

    /// Footprint of the opening (pocket) or base (boss) after the wall.
    pub fn outer_footprint(&self, slope: f64) -> Footprint {
        match *self {
            SceneOp::Pocket { footprint, top, floor, .. } => footprint.grown((top - floor) / slope),
            SceneOp::Boss { footprint, base, top, .. } => footprint.grown((top - base) / slope),
        }
    }
}

/// A plate with pockets and bosses applied in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub width: f64,
    pub depth: f64,
    pub spacing: f64,
    pub plate: f64,
    pub slope: f64,
    pub ops: Vec<SceneOp>,
    /// Negates the height field (pockets become bosses).
    #[serde(default)]
    pub mirrored: bool,
}

impl Scene {
    pub fn plate(width: f64, depth: f64, spacing: f64) -> Scene {
        Scene { width, depth, spacing, plate: 0.0, slope: WALL_SLOPE, ops: Vec::new(), mirrored: false }
    }

    pub fn with(mut self, op: SceneOp) -> Scene {
        self.ops.push(op);
        self
    }

    pub fn height(&self, x: f64, y: f64) -> f64 {
        let z = self.ops.iter().fold(self.plate, |z, op| op.apply(z, x, y, self.slope));
        if self.mirrored {
            -z
        } else {
            z
        }
    }

    pub fn mirror(&self) -> Scene {
        Scene { mirrored: !self.mirrored, ..self.clone() }
    }

    pub fn soup(&self) -> Soup {
        let nx = (self.width / self.spacing).round() as usize;
        let ny = (self.depth / self.spacing).round() as usize;
        heightfield(0.0, 0.0, self.spacing, nx, ny, |x, y| self.height(x, y))
    }

    /// Index of the grid face whose first triangle contains `(x, y)`.
    pub fn face_at(&self, x: f64, y: f64) -> usize {
        grid_face(self.width, self.spacing, x, y)
    }
}

fn grid_face(width: f64, spacing: f64, x: f64, y: f64) -> usize {
    let nx = (width / spacing).round() as usize;
    let i = (x / spacing).floor() as usize;
    let j = (y / spacing).floor() as usize;
    2 * (j * nx + i)
}

pub fn pocket(footprint: Footprint, top: f64, floor: f64) -> SceneOp {
    SceneOp::Pocket { footprint, top, floor, rim_blend: 3.0, foot_blend: 3.0 }
}

pub fn boss(footprint: Footprint, base: f64, top: f64) -> SceneOp {
    SceneOp::Boss { footprint, base, top, rim_blend: 3.0, foot_blend: 3.0 }
}

/// Plate at z = 0 with one pocket of depth 16.
pub fn pocket_plate() -> Scene {
    Scene::plate(60.0, 40.0, 0.25).with(pocket(Footprint::new(20.0, 14.0, 40.0, 26.0, 3.0), 0.0, -16.0))
}

/// Plate with one pocket holding a short boss and a tall boss; the tall boss
/// rises above the plate.
pub fn stepped_pocket_scene() -> Scene {
    let mut scene = Scene::plate(90.0, 56.0, 0.25)
        .with(pocket(Footprint::new(10.0, 10.0, 80.0, 46.0, 4.0), 0.0, -20.0))
        .with(boss(Footprint::new(22.0, 24.0, 30.0, 32.0, 2.0), -20.0, 10.0))
        .with(boss(Footprint::new(55.0, 24.0, 67.0, 32.0, 2.0), -20.0, -8.0));
    scene.slope = 4.0;
    scene
}

/// Layout constants of the forging-die fixture.
pub mod die_layout {
    use super::Footprint;

    pub const WIDTH: f64 = 110.0;
    pub const DEPTH: f64 = 70.0;
    pub const SPACING: f64 = 0.25;
    /// Floor outline of the main cavity at `LEVEL_MID`.
    pub const MAIN: Footprint = Footprint { cx: 55.0, cy: 35.0, hx: 43.6, hy: 23.6, radius: 2.0 };
    /// Floor levels of the three main-cavity fields.
    pub const LEVEL_LEFT: f64 = -12.0;
    pub const LEVEL_MID: f64 = -16.0;
    pub const LEVEL_RIGHT: f64 = -10.0;
    /// Ramp between the left and middle fields, x range.
    pub const RAMP: (f64, f64) = (43.0, 47.0);
    /// Center line of the step between the middle and right fields.
    pub const STEP_X: f64 = 76.0;
    /// Half-width in y of the steep part of the step.
    pub const STEP_STEEP_HALF: f64 = 10.0;
    pub const STEP_TAPER_HALF: f64 = 14.0;
    /// Floor outlines of the nested pockets in the left field.
    pub const POCKET_OUTER: Footprint = Footprint { cx: 26.0, cy: 35.0, hx: 9.5, hy: 9.0, radius: 2.5 };
    pub const POCKET_OUTER_FLOOR: f64 = -20.0;
    pub const POCKET_INNER: Footprint = Footprint { cx: 26.0, cy: 35.0, hx: 3.5, hy: 3.0, radius: 1.5 };
    pub const POCKET_INNER_FLOOR: f64 = -27.0;
    pub const MAIN_BLEND: f64 = 3.0;
    pub const STEP_BLEND: f64 = 2.0;
    pub const POCKET_BLEND: f64 = 2.5;
    pub const WALL_SLOPE: f64 = 2.5;
    pub const STEP_SLOPE_STEEP: f64 = 3.0;
    pub const STEP_SLOPE_GENTLE: f64 = 0.9;
}

fn smoothstep(e0: f64, e1: f64, x: f64) -> f64 {
    let t = ((x - e0) / (e1 - e0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Floor of the die's main cavity before the nested pockets are sunk.
fn die_floor(x: f64, y: f64) -> f64 {
    use die_layout::*;
    let t = ((x - RAMP.0) / (RAMP.1 - RAMP.0)).clamp(0.0, 1.0);
    let ramp = LEVEL_LEFT + (LEVEL_MID - LEVEL_LEFT) * t;
    let off = (y - MAIN.cy).abs();
    let w = smoothstep(STEP_STEEP_HALF, STEP_TAPER_HALF, off);
    let slope = STEP_SLOPE_STEEP + (STEP_SLOPE_GENTLE - STEP_SLOPE_STEEP) * w;
    let rise = LEVEL_RIGHT - LEVEL_MID;
    let step = LEVEL_MID + 0.5 * rise + slope * (x - STEP_X);
    let step = smax(LEVEL_MID, smin(LEVEL_RIGHT, step, STEP_BLEND), STEP_BLEND);
    // The ramp and the step only rise above the middle level in disjoint x ranges.
    ramp.max(step)
}

/// Height of the forging-die fixture surface.
pub fn die_height(x: f64, y: f64) -> f64 {
    use die_layout::*;
    let mut floor = die_floor(x, y);
    let outer_wall = POCKET_OUTER_FLOOR + WALL_SLOPE * POCKET_OUTER.sdf(x, y);
    floor = smin(floor, smax(POCKET_OUTER_FLOOR, outer_wall, POCKET_BLEND), POCKET_BLEND);
    let inner_wall = POCKET_INNER_FLOOR + WALL_SLOPE * POCKET_INNER.sdf(x, y);
    floor = smin(floor, smax(POCKET_INNER_FLOOR, inner_wall, POCKET_BLEND), POCKET_BLEND);
    let main_wall = LEVEL_MID + WALL_SLOPE * MAIN.sdf(x, y);
    smin(0.0, smax(floor, main_wall, MAIN_BLEND), MAIN_BLEND)
}

pub fn die_soup() -> Soup {
    use die_layout::*;
    let nx = (WIDTH / SPACING).round() as usize;
    let ny = (DEPTH / SPACING).round() as usize;
    heightfield(0.0, 0.0, SPACING, nx, ny, die_height)
}

pub fn die_face_at(x: f64, y: f64) -> usize {
    grid_face(die_layout::WIDTH, die_layout::SPACING, x, y)
}

/// Random plate with two cells, each holding a free-standing boss, a plain
/// pocket, or a pocket with a short or a tall boss on its floor.
///
/// Sizes are drawn so that walls and fillets of different footprints never
/// touch, so every scene segments into well-separated features.
pub fn random_scene(seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scene = Scene::plate(96.0, 56.0, 0.5);
    let cell_w = scene.width / 2.0;
    let slope = scene.slope;
    for c in 0..2 {
        let cx = (c as f64 + 0.5) * cell_w;
        let cy = scene.depth / 2.0;
        let kind = rng.gen_range(0..4);
        if kind == 0 {
            let hx = rng.gen_range(4.0..8.0);
            let hy = rng.gen_range(4.0..10.0);
            let top = rng.gen_range(6.0..14.0);
            scene.ops.push(boss(Footprint { cx, cy, hx, hy, radius: 2.0 }, 0.0, top));
            continue;
        }
        if kind == 1 {
            let floor = -rng.gen_range(10.0..20.0);
            let hx = rng.gen_range(6.0..12.0);
            let hy = rng.gen_range(6.0..16.0);
            scene.ops.push(pocket(Footprint { cx, cy, hx, hy, radius: 2.5 }, 0.0, floor));
            continue;
        }
        let floor = -rng.gen_range(12.0..16.0);
        let height = if kind == 2 { rng.gen_range(5.0..-floor - 4.0) } else { rng.gen_range(-floor + 3.0..-floor + 8.0) };
        let plateau = Footprint { cx, cy, hx: rng.gen_range(2.0..3.0), hy: rng.gen_range(2.0..3.0), radius: 1.5 };
        let base = plateau.grown(height / slope);
        let clear = 4.0;
        let hx = base.hx + clear + rng.gen_range(0.0..1.0);
        let hy = base.hy + clear + rng.gen_range(0.0..4.0);
        scene.ops.push(pocket(Footprint { cx, cy, hx, hy, radius: 2.5 }, 0.0, floor));
        scene.ops.push(boss(plateau, floor, floor + height));
    }
    scene
}
