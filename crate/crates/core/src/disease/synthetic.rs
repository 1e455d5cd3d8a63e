//! Seeded stand-in for leaf photographs.
//!
//! Every image is a full-frame leaf surface: a per-class base colour with a
//! random jitter of ±6 levels per channel, per-pixel noise of ±8 levels, and
//! a class motif.
//!
//! | class     | base RGB       | motif                                            |
//! |-----------|----------------|--------------------------------------------------|
//! | Healthy   | (40, 150, 55)  | none                                             |
//! | Hispa     | (150, 165, 60) | 3–6 pale horizontal streaks, 1–2 px thick        |
//! | LeafBlast | (85, 115, 95)  | 2–4 grey elliptical lesions with a brown rim     |
//! | BrownSpot | (125, 120, 40) | 6–12 small dark-brown round spots                |
//!
//! Motif dimensions scale with `size / 64`. Image `i` of a set generated
//! with seed `s` uses its own ChaCha8 stream seeded from `(s, i)`, so the
//! same arguments always produce the same pixels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DiseaseClass, RawImage};

fn base_colour(class: DiseaseClass) -> [f64; 3] {
    match class {
        DiseaseClass::Healthy => [40.0, 150.0, 55.0],
        DiseaseClass::Hispa => [150.0, 165.0, 60.0],
        DiseaseClass::LeafBlast => [85.0, 115.0, 95.0],
        DiseaseClass::BrownSpot => [125.0, 120.0, 40.0],
    }
}

fn put(canvas: &mut [[f64; 3]], size: usize, x: i64, y: i64, rgb: [f64; 3]) {
    if x >= 0 && y >= 0 && (x as usize) < size && (y as usize) < size {
        canvas[y as usize * size + x as usize] = rgb;
    }
}

/// Generates one `size × size` RGB leaf of `class`.
pub fn synthetic_leaf(class: DiseaseClass, size: usize, rng: &mut impl Rng) -> RawImage {
    let scale = size as f64 / 64.0;
    let base = base_colour(class);
    let jitter: [f64; 3] = std::array::from_fn(|_| rng.random_range(-6.0..6.0));
    let mut canvas: Vec<[f64; 3]> =
        vec![std::array::from_fn(|c| base[c] + jitter[c]); size * size];

    match class {
        DiseaseClass::Healthy => {}
        DiseaseClass::Hispa => {
            let streaks = rng.random_range(3..=6);
            for _ in 0..streaks {
                let y0 = rng.random_range(0..size) as i64;
                let len = ((rng.random_range(0.4..0.9)) * size as f64) as i64;
                let x0 = rng.random_range(0..size.max(1)) as i64 - len / 3;
                let thick = rng.random_range(1..=2);
                let shade = [205.0, 210.0, 170.0];
                for dy in 0..thick {
                    for dx in 0..len {
                        put(&mut canvas, size, x0 + dx, y0 + dy, shade);
                    }
                }
            }
        }
        DiseaseClass::LeafBlast => {
            let lesions = rng.random_range(2..=4);
            for _ in 0..lesions {
                let cx = rng.random_range(0.0..size as f64);
                let cy = rng.random_range(0.0..size as f64);
                let a = rng.random_range(5.0..9.0) * scale;
                let b = a * rng.random_range(0.35..0.55);
                let r = (a + 2.0) as i64;
                for y in (cy as i64 - r)..=(cy as i64 + r) {
                    for x in (cx as i64 - r)..=(cx as i64 + r) {
                        let dx = (x as f64 - cx) / a;
                        let dy = (y as f64 - cy) / b;
                        let d = dx * dx + dy * dy;
                        if d <= 0.55 {
                            put(&mut canvas, size, x, y, [172.0, 165.0, 145.0]);
                        } else if d <= 1.0 {
                            put(&mut canvas, size, x, y, [120.0, 78.0, 40.0]);
                        }
                    }
                }
            }
        }
        DiseaseClass::BrownSpot => {
            let spots = rng.random_range(6..=12);
            for _ in 0..spots {
                let cx = rng.random_range(0.0..size as f64);
                let cy = rng.random_range(0.0..size as f64);
                let radius = rng.random_range(1.5..3.5) * scale;
                let r = radius.ceil() as i64;
                for y in (cy as i64 - r)..=(cy as i64 + r) {
                    for x in (cx as i64 - r)..=(cx as i64 + r) {
                        let d = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                        if d <= radius * radius {
                            put(&mut canvas, size, x, y, [98.0, 58.0, 28.0]);
                        }
                    }
                }
            }
        }
    }

    let mut pixels = Vec::with_capacity(size * size * 3);
    for px in &canvas {
        for &v in px {
            let noisy = v + rng.random_range(-8.0..8.0);
            pixels.push(noisy.round().clamp(0.0, 255.0) as u8);
        }
    }
    RawImage::new(size as u32, size as u32, 3, pixels).expect("generator produces consistent buffers")
}

/// `per_class` images of every class, interleaved by class, from `seed`.
pub fn synthetic_dataset(per_class: usize, size: usize, seed: u64) -> Vec<(RawImage, DiseaseClass)> {
    let mut out = Vec::with_capacity(per_class * DiseaseClass::ALL.len());
    for i in 0..per_class {
        for (c, &class) in DiseaseClass::ALL.iter().enumerate() {
            let index = (i * DiseaseClass::ALL.len() + c) as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(index);
            out.push((synthetic_leaf(class, size, &mut rng), class));
        }
    }
    out
}

/// Train and test sets with disjoint streams: the test set uses `seed + 1`.
pub fn synthetic_split(
    train_per_class: usize,
    test_per_class: usize,
    size: usize,
    seed: u64,
) -> (Vec<(RawImage, DiseaseClass)>, Vec<(RawImage, DiseaseClass)>) {
    (
        synthetic_dataset(train_per_class, size, seed),
        synthetic_dataset(test_per_class, size, seed.wrapping_add(1)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_distinct() {
        let a = synthetic_dataset(2, 16, 5);
        let b = synthetic_dataset(2, 16, 5);
        let c = synthetic_dataset(2, 16, 6);
        assert_eq!(a.len(), 8);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a[0].0, a[4].0);
        assert_eq!(a[1].1, DiseaseClass::Hispa);
    }
}
