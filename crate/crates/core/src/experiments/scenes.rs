//! Seeded synthetic polarization scenes.
//!
//! Each scene is described by per-pixel (S0 per color, DoLP, AoLP) maps and
//! turned into the four sub-images through Malus' law, so every pixel obeys
//! `I0 + I90 == I45 + I135`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{PolarizedScene, SceneExtent};
use crate::stokes::polarizer_intensity;

/// Sub-image polarizer angles, degrees.
pub const SUBIMAGE_ANGLES: [f64; 4] = [0.0, 45.0, 90.0, 135.0];

fn zero() -> f64 {
    0.0
}
fn ninety() -> f64 {
    90.0
}
fn one() -> f64 {
    1.0
}
fn three() -> usize {
    3
}
fn screen_angle() -> f64 {
    135.0
}
fn six() -> usize {
    6
}
fn twelve() -> usize {
    12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SceneKind {
    /// Left half lit with light polarized at `left_aolp_deg`, right half at
    /// `right_aolp_deg`; `objects` diffuse discs partly depolarize it.
    TwoSource {
        #[serde(default = "zero")]
        left_aolp_deg: f64,
        #[serde(default = "ninety")]
        right_aolp_deg: f64,
        #[serde(default = "one")]
        dolp: f64,
        #[serde(default = "three")]
        objects: usize,
    },
    /// Polarized screen with stressed transparent film patches that rotate
    /// the polarization, slightly differently per color.
    Birefringent {
        #[serde(default = "screen_angle")]
        screen_aolp_deg: f64,
        #[serde(default = "six")]
        blobs: usize,
    },
    /// Random rectangles of constant (S0, DoLP, AoLP) over a random background.
    PiecewiseConstant {
        #[serde(default = "twelve")]
        regions: usize,
    },
}

impl SceneKind {
    pub fn name(&self) -> &'static str {
        match self {
            SceneKind::TwoSource { .. } => "two-source",
            SceneKind::Birefringent { .. } => "birefringent",
            SceneKind::PiecewiseConstant { .. } => "piecewise-constant",
        }
    }
}

// serde cannot combine `flatten` with `deny_unknown_fields`, so misspelled
// keys here are ignored rather than rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(flatten)]
    pub kind: SceneKind,
    pub height: usize,
    pub width: usize,
    #[serde(default = "three")]
    pub colors: usize,
    #[serde(default)]
    pub seed: u64,
}

impl SceneSpec {
    pub fn new(kind: SceneKind, height: usize, width: usize, colors: usize, seed: u64) -> Self {
        SceneSpec {
            id: None,
            kind,
            height,
            width,
            colors,
            seed,
        }
    }

    pub fn scene_id(&self) -> String {
        self.id
            .clone()
            .unwrap_or_else(|| format!("{}-{}", self.kind.name(), self.seed))
    }

    pub fn extent(&self) -> Result<SceneExtent> {
        SceneExtent::new(self.height, self.width, self.colors, SUBIMAGE_ANGLES.len())
    }

    /// One scene of each kind with seeds `seed`, `seed + 1`, `seed + 2`.
    pub fn standard_set(height: usize, width: usize, colors: usize, seed: u64) -> Vec<SceneSpec> {
        vec![
            SceneSpec::new(
                SceneKind::TwoSource {
                    left_aolp_deg: 0.0,
                    right_aolp_deg: 90.0,
                    dolp: 1.0,
                    objects: 3,
                },
                height,
                width,
                colors,
                seed,
            ),
            SceneSpec::new(
                SceneKind::Birefringent {
                    screen_aolp_deg: 135.0,
                    blobs: 6,
                },
                height,
                width,
                colors,
                seed + 1,
            ),
            SceneSpec::new(SceneKind::PiecewiseConstant { regions: 12 }, height, width, colors, seed + 2),
        ]
    }
}

/// Polarization state of one pixel.
#[derive(Debug, Clone)]
struct Pixel {
    s0: Vec<f64>,
    dolp: f64,
    aolp: f64,
}

struct Disc {
    ci: f64,
    cj: f64,
    ri: f64,
    rj: f64,
}

impl Disc {
    fn random(rng: &mut ChaCha8Rng, h: usize, w: usize, lo: f64, hi: f64) -> Disc {
        Disc {
            ci: rng.random_range(0.0..h as f64),
            cj: rng.random_range(0.0..w as f64),
            ri: rng.random_range(lo..hi) * h as f64,
            rj: rng.random_range(lo..hi) * w as f64,
        }
    }

    fn contains(&self, i: usize, j: usize) -> bool {
        let di = (i as f64 + 0.5 - self.ci) / self.ri;
        let dj = (j as f64 + 0.5 - self.cj) / self.rj;
        di * di + dj * dj <= 1.0
    }
}

fn check_dolp(d: f64) -> Result<()> {
    if (0.0..=1.0).contains(&d) {
        Ok(())
    } else {
        Err(Error::invalid(format!("DoLP {d} outside [0, 1]")))
    }
}

fn render(extent: SceneExtent, pixels: &[Pixel]) -> Result<PolarizedScene> {
    let w = extent.width;
    PolarizedScene::from_fn(extent, |i, j, c, p| {
        let px = &pixels[i * w + j];
        polarizer_intensity(px.s0[c], px.dolp, px.aolp, SUBIMAGE_ANGLES[p]).max(0.0)
    })
}

pub fn synthesize_scene(spec: &SceneSpec) -> Result<PolarizedScene> {
    let extent = spec.extent()?;
    let (h, w, colors) = (spec.height, spec.width, spec.colors);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut pixels = Vec::with_capacity(h * w);
    match &spec.kind {
        SceneKind::TwoSource {
            left_aolp_deg,
            right_aolp_deg,
            dolp,
            objects,
        } => {
            check_dolp(*dolp)?;
            let discs: Vec<(Disc, Vec<f64>, f64)> = (0..*objects)
                .map(|_| {
                    let d = Disc::random(&mut rng, h, w, 0.08, 0.2);
                    let reflect = (0..colors).map(|_| rng.random_range(0.3..0.9)).collect();
                    (d, reflect, rng.random_range(0.2..0.8))
                })
                .collect();
            for i in 0..h {
                for j in 0..w {
                    let mut px = Pixel {
                        s0: vec![0.8; colors],
                        dolp: *dolp,
                        aolp: if 2 * j < w { *left_aolp_deg } else { *right_aolp_deg },
                    };
                    for (d, reflect, keep) in &discs {
                        if d.contains(i, j) {
                            px.s0.iter_mut().zip(reflect).for_each(|(s, r)| *s *= r);
                            px.dolp *= keep;
                        }
                    }
                    pixels.push(px);
                }
            }
        }
        SceneKind::Birefringent { screen_aolp_deg, blobs } => {
            let patches: Vec<(Disc, f64, f64, f64)> = (0..*blobs)
                .map(|_| {
                    let d = Disc::random(&mut rng, h, w, 0.1, 0.25);
                    let rotation = rng.random_range(20.0..70.0);
                    (d, rotation, rng.random_range(0.6..1.0), rng.random_range(0.7..0.95))
                })
                .collect();
            let mid = (colors as f64 - 1.0) / 2.0;
            for i in 0..h {
                for j in 0..w {
                    let mut s0 = vec![0.8; colors];
                    let mut dolp: f64 = 0.95;
                    let mut rotation = 0.0;
                    for (d, rot, keep, transmit) in &patches {
                        if d.contains(i, j) {
                            rotation += rot;
                            dolp *= keep;
                            s0.iter_mut().for_each(|s| *s *= transmit);
                        }
                    }
                    // dispersion: color c sees a slightly different rotation,
                    // which shows up as a per-color intensity change here
                    for (c, s) in s0.iter_mut().enumerate() {
                        let tint = 1.0 + 0.15 * (c as f64 - mid) * (rotation / 90.0).min(1.0);
                        *s = (*s * tint).clamp(0.0, 1.0);
                    }
                    pixels.push(Pixel {
                        s0,
                        dolp,
                        aolp: screen_aolp_deg + rotation,
                    });
                }
            }
        }
        SceneKind::PiecewiseConstant { regions } => {
            let random_pixel = |rng: &mut ChaCha8Rng| Pixel {
                s0: (0..colors).map(|_| rng.random_range(0.2..1.0)).collect(),
                dolp: rng.random_range(0.0..=1.0),
                aolp: rng.random_range(-90.0..90.0),
            };
            let background = random_pixel(&mut rng);
            pixels.resize(h * w, background);
            for _ in 0..*regions {
                let rh = rng.random_range(h.div_ceil(8)..=h.div_ceil(2));
                let rw = rng.random_range(w.div_ceil(8)..=w.div_ceil(2));
                let i0 = rng.random_range(0..=h - rh.min(h));
                let j0 = rng.random_range(0..=w - rw.min(w));
                let px = random_pixel(&mut rng);
                for i in i0..(i0 + rh).min(h) {
                    for j in j0..(j0 + rw).min(w) {
                        pixels[i * w + j] = px.clone();
                    }
                }
            }
        }
    }
    render(extent, &pixels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn consistent(x: &PolarizedScene) -> bool {
        let e = x.extent();
        (0..e.colors).all(|c| {
            let (a, b, cc, d) = (x.plane(c, 0), x.plane(c, 1), x.plane(c, 2), x.plane(c, 3));
            (0..e.plane_len()).all(|k| (a[k] + cc[k] - b[k] - d[k]).abs() <= 1e-12)
        })
    }

    #[test]
    fn every_kind_is_consistent_nonnegative_and_seeded() {
        for spec in SceneSpec::standard_set(40, 36, 3, 9) {
            let a = synthesize_scene(&spec).unwrap();
            assert!(consistent(&a), "{}", spec.scene_id());
            assert!(a.planar().iter().all(|&v| v >= 0.0));
            assert_eq!(a, synthesize_scene(&spec).unwrap());
            let other = SceneSpec { seed: spec.seed + 100, ..spec.clone() };
            assert_ne!(a, synthesize_scene(&other).unwrap());
        }
    }

    #[test]
    fn two_source_without_objects() {
        let spec = SceneSpec::new(
            SceneKind::TwoSource {
                left_aolp_deg: 0.0,
                right_aolp_deg: 90.0,
                dolp: 1.0,
                objects: 0,
            },
            8,
            10,
            1,
            0,
        );
        let x = synthesize_scene(&spec).unwrap();
        for i in 0..8 {
            for j in 0..10 {
                let left = j < 5;
                assert!((x.get(i, j, 0, 0) - if left { 0.8 } else { 0.0 }).abs() < 1e-12);
                assert!((x.get(i, j, 0, 2) - if left { 0.0 } else { 0.8 }).abs() < 1e-12);
                assert!((x.get(i, j, 0, 1) - 0.4).abs() < 1e-12);
                assert!((x.get(i, j, 0, 3) - 0.4).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unpolarized_pixel_splits_evenly() {
        let px = Pixel {
            s0: vec![0.6],
            dolp: 0.0,
            aolp: 33.0,
        };
        let e = SceneExtent::new(1, 1, 1, 4).unwrap();
        let x = render(e, &[px]).unwrap();
        assert!(x.planar().iter().all(|&v| (v - 0.3).abs() < 1e-15));
    }

    #[test]
    fn rejects_bad_dolp() {
        let spec = SceneSpec::new(
            SceneKind::TwoSource {
                left_aolp_deg: 0.0,
                right_aolp_deg: 90.0,
                dolp: 1.5,
                objects: 0,
            },
            4,
            4,
            1,
            0,
        );
        assert!(synthesize_scene(&spec).is_err());
    }
}
