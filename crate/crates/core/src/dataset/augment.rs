//! Image-space augmentation.
//!
//! An [`EmissionPrototype`] is an emission cut out of a rendered frame:
//! its pixel patch, class and native box. Augmentations place prototypes
//! onto a synthetic noise background and return both the new image and
//! the adjusted labels, so augmented samples stay usable for training.
//!
//! Pixel composition happens in linear energy. A pixel is inverted
//! through the grayscale mapping to an energy, energies add, and the sum
//! is mapped back. Placing a single unmodified prototype therefore
//! reproduces its pixels exactly, and overlapping equal pixels brighten
//! by 3 dB, the same as two equal-power emissions colliding on air.

use super::{Annotation, BoundingBox};
use crate::emission::EmissionClass;
use crate::spectral::{GrayImage, MappingConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

/// An emission patch cut from a rendered grayscale frame.
#[derive(Debug, Clone)]
pub struct EmissionPrototype {
    pub class: EmissionClass,
    pub patch: GrayImage,
    /// Where the patch came from, in normalized coordinates of the source
    /// frame.
    pub native_box: BoundingBox,
    pub snr_db: Option<f64>,
}

/// Cuts the pixel rectangle of an annotation out of a frame.
pub fn extract_prototype(img: &GrayImage, ann: &Annotation) -> EmissionPrototype {
    let x0 = (ann.bbox.x_min() * img.width as f64).round().max(0.0) as usize;
    let x1 = ((ann.bbox.x_max() * img.width as f64).round() as usize).min(img.width);
    let y0 = (ann.bbox.y_min() * img.height as f64).round().max(0.0) as usize;
    let y1 = ((ann.bbox.y_max() * img.height as f64).round() as usize).min(img.height);
    let (x1, y1) = (x1.max(x0 + 1), y1.max(y0 + 1));

    let mut patch = GrayImage::new(x1 - x0, y1 - y0);
    for y in y0..y1.min(img.height) {
        for x in x0..x1.min(img.width) {
            patch.set(x - x0, y - y0, img.get(x, y));
        }
    }
    EmissionPrototype {
        class: ann.class,
        patch,
        native_box: ann.bbox,
        snr_db: ann.snr_db,
    }
}

/// Target canvas for augmentation: size, pixel mapping and the seed that
/// fixes the synthetic noise background.
#[derive(Debug, Clone)]
pub struct AugmentCanvas {
    pub width: usize,
    pub height: usize,
    pub mapping: MappingConfig,
    pub seed: u64,
}

impl AugmentCanvas {
    /// Per-pixel background energies: unit-mean exponential draws, the
    /// energy statistics of noise rendered at an exact noise floor.
    fn background_energy(&self) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.width * self.height)
            .map(|_| Exp1.sample(&mut rng))
            .collect()
    }

    fn render(&self, energy: &[f64]) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            pixels: energy
                .iter()
                .map(|&e| self.mapping.pixel(10.0 * e.log10()))
                .collect(),
        }
    }
}

/// Pixel rectangle a prototype occupies when its box center is shifted by
/// `(dx, dy)` pixels from its native position.
fn placement_rect(
    proto: &EmissionPrototype,
    canvas: &AugmentCanvas,
    dx: i32,
    dy: i32,
) -> (i64, i64) {
    let x0 = (proto.native_box.x_min() * canvas.width as f64).round() as i64 + dx as i64;
    let y0 = (proto.native_box.y_min() * canvas.height as f64).round() as i64 + dy as i64;
    (x0, y0)
}

fn shifted_box(
    proto: &EmissionPrototype,
    canvas: &AugmentCanvas,
    dx: i32,
    dy: i32,
) -> Option<BoundingBox> {
    BoundingBox {
        x_center: proto.native_box.x_center + dx as f64 / canvas.width as f64,
        y_center: proto.native_box.y_center + dy as f64 / canvas.height as f64,
        ..proto.native_box
    }
    .clip_unit()
}

/// Composes prototypes onto the canvas in linear energy.
///
/// Pixels covered by at least one prototype rectangle take the energy sum
/// of the overlapping patches; the noise background shows only where no
/// patch covers. One annotation per prototype that stays on-canvas.
pub fn augment_collide(
    protos: &[(EmissionPrototype, (i32, i32))],
    canvas: &AugmentCanvas,
) -> (GrayImage, Vec<Annotation>) {
    let mut energy = canvas.background_energy();
    let mut covered = vec![false; canvas.width * canvas.height];

    for (proto, (dx, dy)) in protos {
        let (px0, py0) = placement_rect(proto, canvas, *dx, *dy);
        for y in 0..proto.patch.height {
            let cy = py0 + y as i64;
            if cy < 0 || cy >= canvas.height as i64 {
                continue;
            }
            for x in 0..proto.patch.width {
                let cx = px0 + x as i64;
                if cx < 0 || cx >= canvas.width as i64 {
                    continue;
                }
                let i = cy as usize * canvas.width + cx as usize;
                let e = canvas.mapping.pixel_to_energy(proto.patch.get(x, y));
                if covered[i] {
                    energy[i] += e;
                } else {
                    energy[i] = e;
                    covered[i] = true;
                }
            }
        }
    }

    let annotations = protos
        .iter()
        .filter_map(|(proto, (dx, dy))| {
            Some(Annotation {
                class: proto.class,
                bbox: shifted_box(proto, canvas, *dx, *dy)?,
                snr_db: proto.snr_db,
            })
        })
        .collect();
    (canvas.render(&energy), annotations)
}

/// Places one prototype at an offset from its native position over a
/// fresh noise background.
pub fn augment_move(
    proto: &EmissionPrototype,
    canvas: &AugmentCanvas,
    dx: i32,
    dy: i32,
) -> (GrayImage, Vec<Annotation>) {
    augment_collide(std::slice::from_ref(&(proto.clone(), (dx, dy))), canvas)
}

/// Stretches or shrinks a prototype along the time axis to
/// `new_height_px` rows (nearest-neighbor), keeping the box center.
pub fn augment_length(
    proto: &EmissionPrototype,
    canvas: &AugmentCanvas,
    new_height_px: usize,
) -> (GrayImage, Vec<Annotation>) {
    let new_height_px = new_height_px.clamp(1, canvas.height);
    let src = &proto.patch;
    let mut patch = GrayImage::new(src.width, new_height_px);
    for y in 0..new_height_px {
        // Nearest source row by bin center.
        let sy = ((y as f64 + 0.5) * src.height as f64 / new_height_px as f64) as usize;
        let sy = sy.min(src.height - 1);
        for x in 0..src.width {
            patch.set(x, y, src.get(x, sy));
        }
    }
    let stretched = EmissionPrototype {
        patch,
        native_box: BoundingBox {
            height: new_height_px as f64 / canvas.height as f64,
            ..proto.native_box
        }
        .clip_unit()
        .unwrap_or(proto.native_box),
        ..proto.clone()
    };
    augment_move(&stretched, canvas, 0, 0)
}

/// Scales a prototype's level by `delta_db` before placing it. Pixels at
/// zero stay zero; their level is unknown, not merely low.
pub fn augment_brightness(
    proto: &EmissionPrototype,
    canvas: &AugmentCanvas,
    delta_db: f64,
) -> (GrayImage, Vec<Annotation>) {
    let gamma = canvas.mapping.gamma();
    let mut patch = proto.patch.clone();
    for p in &mut patch.pixels {
        if *p > 0 {
            let a = *p as f64 / gamma + canvas.mapping.a_min_db + delta_db;
            *p = canvas.mapping.pixel(a);
        }
    }
    let adjusted = EmissionPrototype {
        patch,
        snr_db: proto.snr_db.map(|s| s + delta_db),
        ..proto.clone()
    };
    augment_move(&adjusted, canvas, 0, 0)
}
