//! Synthetic 28x28 digit dataset in IDX format.
//!
//! Renders a 5x7 glyph per class, upscaled 3x, with random placement jitter,
//! per-image intensity, and Gaussian pixel noise. Stands in for MNIST-class
//! data in environments without dataset downloads; the class structure is
//! easy enough for a desk-scale CNN while noise keeps confidences informative.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::harness::idx;
use crate::rng::{self, tag};

const GLYPHS: [[&str; 7]; 10] = [
    ["01110", "10001", "10011", "10101", "11001", "10001", "01110"],
    ["00100", "01100", "00100", "00100", "00100", "00100", "01110"],
    ["01110", "10001", "00001", "00010", "00100", "01000", "11111"],
    ["11110", "00001", "00001", "01110", "00001", "00001", "11110"],
    ["00010", "00110", "01010", "10010", "11111", "00010", "00010"],
    ["11111", "10000", "11110", "00001", "00001", "10001", "01110"],
    ["01110", "10000", "10000", "11110", "10001", "10001", "01110"],
    ["11111", "00001", "00010", "00100", "01000", "01000", "01000"],
    ["01110", "10001", "10001", "01110", "10001", "10001", "01110"],
    ["01110", "10001", "10001", "01111", "00001", "00001", "01110"],
];

pub const IMAGE_SIDE: usize = 28;
const SCALE: usize = 3;
const GLYPH_W: usize = 5 * SCALE;
const GLYPH_H: usize = 7 * SCALE;
const NOISE_STD: f64 = 16.0;

fn render(class: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<u8> {
    let x0 = (IMAGE_SIDE - GLYPH_W) / 2;
    let y0 = (IMAGE_SIDE - GLYPH_H) / 2;
    let dx = rng.gen_range(-3i32..=3);
    let dy = rng.gen_range(-3i32..=3);
    let intensity = 0.7 + 0.3 * rng.gen::<f64>();

    let mut pixels = vec![0.0f64; IMAGE_SIDE * IMAGE_SIDE];
    let glyph = &GLYPHS[class];
    for (gy, row) in glyph.iter().enumerate() {
        for (gx, cell) in row.bytes().enumerate() {
            if cell != b'1' {
                continue;
            }
            for sy in 0..SCALE {
                for sx in 0..SCALE {
                    let py = y0 as i32 + dy + (gy * SCALE + sy) as i32;
                    let px = x0 as i32 + dx + (gx * SCALE + sx) as i32;
                    if (0..IMAGE_SIDE as i32).contains(&py) && (0..IMAGE_SIDE as i32).contains(&px) {
                        pixels[py as usize * IMAGE_SIDE + px as usize] = intensity * 255.0;
                    }
                }
            }
        }
    }
    pixels
        .into_iter()
        .map(|v| {
            let z: f64 = StandardNormal.sample(rng);
            (v + NOISE_STD * z).clamp(0.0, 255.0) as u8
        })
        .collect()
}

/// Generates `count` labelled images with a balanced, shuffled class order.
pub fn generate_images(count: usize, seed: u64) -> (Vec<Vec<u8>>, Vec<u8>) {
    let mut rng = rng::stream(seed, tag::DATA, 0);
    let mut images = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let class = if i < count / 10 * 10 {
            // balanced body, shuffled below
            i % 10
        } else {
            rng.gen_range(0..10)
        };
        labels.push(class as u8);
        images.push(Vec::new());
    }
    // shuffle label order, then render in final order so images match labels
    for i in (1..count).rev() {
        let j = rng.gen_range(0..=i);
        labels.swap(i, j);
    }
    for i in 0..count {
        images[i] = render(labels[i] as usize, &mut rng);
    }
    (images, labels)
}

/// Writes train and test IDX files under `dir` using MNIST's file names.
pub fn write_dataset(dir: &Path, train: usize, test: usize, seed: u64) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| crate::error::Error::io(dir, e))?;
    let (train_images, train_labels) = generate_images(train, seed);
    let (test_images, test_labels) = generate_images(test, rng::mix(seed, 0x7e57, 0));
    idx::write_idx_images(&dir.join("train-images-idx3-ubyte"), &train_images, IMAGE_SIDE, IMAGE_SIDE)?;
    idx::write_idx_labels(&dir.join("train-labels-idx1-ubyte"), &train_labels)?;
    idx::write_idx_images(&dir.join("t10k-images-idx3-ubyte"), &test_images, IMAGE_SIDE, IMAGE_SIDE)?;
    idx::write_idx_labels(&dir.join("t10k-labels-idx1-ubyte"), &test_labels)?;
    Ok(())
}
