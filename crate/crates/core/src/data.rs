//! Synthetic 2D and 3D datasets, standardization and splitting.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;
use core::str::FromStr;

use crate::error::{arg, Error, Result};
use crate::rng::{stream, SeededRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DatasetName {
    CheckerBoard,
    Pinwheel,
    Spiral,
    Alphabet,
    BentLissajous,
    InterlockedCircles,
    Knotted,
    TwistedEight,
}

impl DatasetName {
    pub const ALL: [DatasetName; 8] = [
        DatasetName::CheckerBoard,
        DatasetName::Pinwheel,
        DatasetName::Spiral,
        DatasetName::Alphabet,
        DatasetName::BentLissajous,
        DatasetName::InterlockedCircles,
        DatasetName::Knotted,
        DatasetName::TwistedEight,
    ];

    pub fn dim(self) -> usize {
        match self {
            DatasetName::CheckerBoard | DatasetName::Pinwheel | DatasetName::Spiral | DatasetName::Alphabet => 2,
            _ => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DatasetName::CheckerBoard => "checkerboard",
            DatasetName::Pinwheel => "pinwheel",
            DatasetName::Spiral => "spiral",
            DatasetName::Alphabet => "alphabet",
            DatasetName::BentLissajous => "bent_lissajous",
            DatasetName::InterlockedCircles => "interlocked_circles",
            DatasetName::Knotted => "knotted",
            DatasetName::TwistedEight => "twisted_eight",
        }
    }
}

impl fmt::Display for DatasetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).map(|c| c.to_ascii_lowercase()).collect();
        DatasetName::ALL
            .into_iter()
            .find(|d| d.as_str().replace('_', "") == key)
            .ok_or_else(|| Error::Argument(format!("unknown dataset '{s}'")))
    }
}

/// Protocol noise added to every dataset after its own recipe.
pub const GLOBAL_NOISE: f64 = 0.01;
pub const CURVE_SCALE: f64 = 4.0;

/// The letter 'W' on a 7x5 grid, top row first.
pub const W_BITMAP: [&str; 7] = ["10001", "10001", "10001", "10101", "10101", "10101", "01010"];
pub const ALPHABET_CELL: f64 = 0.2;

const CHECKER_HALF_WIDTH: f64 = 0.6;
const CHECKER_NOISE: f64 = 0.15;
const SPIRAL_NOISE: f64 = 0.1;

/// Unscaled 3D curve at parameter `t`; `branch` picks the circle for the
/// two-circle datasets.
pub fn curve_point(name: DatasetName, t: f64, branch: bool) -> Result<[f64; 3]> {
    use libm::{cos, sin};
    Ok(match name {
        DatasetName::BentLissajous => [sin(2.0 * t), cos(t), cos(2.0 * t)],
        DatasetName::Knotted => [sin(t) + 2.0 * sin(2.0 * t), cos(t) - 2.0 * cos(2.0 * t), sin(3.0 * t)],
        DatasetName::InterlockedCircles => {
            if branch {
                [1.0 + sin(t), 0.0, cos(t)]
            } else {
                [sin(t), cos(t), 0.0]
            }
        }
        DatasetName::TwistedEight => {
            if branch {
                [2.0 + sin(t), 0.0, cos(t)]
            } else {
                [sin(t), cos(t), 0.0]
            }
        }
        other => return arg(format!("{other} is not a 3D curve")),
    })
}

type Stages = (Vec<Vec<f64>>, Vec<Vec<f64>>);

/// Points before and after the protocol noise. Both come from one stream,
/// recipe draws first.
pub fn generate_stages(name: DatasetName, n: usize, seed: u64) -> Result<Stages> {
    let mut rng = SeededRng::with_stream(seed, stream::DATA);
    let mut clean = Vec::with_capacity(n);
    for _ in 0..n {
        clean.push(sample(name, &mut rng)?);
    }
    let noisy = clean.iter().map(|p| p.iter().map(|v| v + GLOBAL_NOISE * rng.normal()).collect()).collect();
    Ok((clean, noisy))
}

/// Raw dataset points (recipe followed by protocol noise).
pub fn generate(name: DatasetName, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    Ok(generate_stages(name, n, seed)?.1)
}

fn sample(name: DatasetName, rng: &mut SeededRng) -> Result<Vec<f64>> {
    Ok(match name {
        DatasetName::CheckerBoard => {
            let cell = rng.below(9);
            let c = [-1.5 + 1.5 * (cell % 3) as f64, -1.5 + 1.5 * (cell / 3) as f64];
            c.iter()
                .map(|&ci| {
                    let v = rng.uniform_range(ci - CHECKER_HALF_WIDTH, ci + CHECKER_HALF_WIDTH)
                        + CHECKER_NOISE * rng.normal();
                    v.clamp(ci - CHECKER_HALF_WIDTH, ci + CHECKER_HALF_WIDTH)
                })
                .collect()
        }
        DatasetName::Pinwheel => {
            let arm = rng.below(5);
            let r = 1.0 + 0.3 * rng.normal();
            let th = 2.0 * PI * arm as f64 / 5.0 + 0.2 * rng.normal();
            vec![r * libm::cos(th), r * libm::sin(th)]
        }
        DatasetName::Spiral => {
            let sign = if rng.below(2) == 0 { 1.0 } else { -1.0 };
            let raw = rng.uniform_range(0.0, 2.0 * PI);
            let th = libm::sqrt(raw) * 2.0 * PI;
            let r = 2.0 * th;
            vec![
                sign * r * libm::cos(th) + SPIRAL_NOISE * rng.normal(),
                sign * r * libm::sin(th) + SPIRAL_NOISE * rng.normal(),
            ]
        }
        DatasetName::Alphabet => {
            let on: Vec<(usize, usize)> = W_BITMAP
                .iter()
                .enumerate()
                .flat_map(|(r, row)| row.bytes().enumerate().filter(|(_, b)| *b == b'1').map(move |(c, _)| (r, c)))
                .collect();
            let (row, col) = on[rng.below(on.len())];
            vec![
                (col as f64 + rng.uniform()) * ALPHABET_CELL,
                ((W_BITMAP.len() - 1 - row) as f64 + rng.uniform()) * ALPHABET_CELL,
            ]
        }
        curve => {
            let t = rng.uniform_range(-PI, PI);
            let branch =
                matches!(curve, DatasetName::InterlockedCircles | DatasetName::TwistedEight) && rng.below(2) == 1;
            curve_point(curve, t, branch)?.iter().map(|v| v * CURVE_SCALE).collect()
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitSpec {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { train: 10_000, val: 5_000, test: 5_000 }
    }
}

impl SplitSpec {
    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub stddev: Vec<f64>,
}

impl Standardization {
    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        p.iter().enumerate().map(|(i, v)| (v - self.mean[i]) / self.stddev[i]).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Splits {
    pub train: Vec<Vec<f64>>,
    pub val: Vec<Vec<f64>>,
    pub test: Vec<Vec<f64>>,
    pub standardization: Standardization,
}

const MIN_STDDEV: f64 = 1e-12;

/// Shuffles, splits and standardizes with statistics of the train split.
pub fn standardize_and_split(raw: &[Vec<f64>], split: SplitSpec, seed: u64) -> Result<Splits> {
    if split.train == 0 || split.val == 0 || split.test == 0 {
        return arg("split counts must be positive");
    }
    if raw.len() < split.total() {
        return arg(format!("need {} points, got {}", split.total(), raw.len()));
    }
    let d = raw[0].len();
    let mut idx: Vec<usize> = (0..raw.len()).collect();
    SeededRng::with_stream(seed, stream::SPLIT).shuffle(&mut idx);
    let train_raw: Vec<&Vec<f64>> = idx[..split.train].iter().map(|&i| &raw[i]).collect();
    let n = train_raw.len() as f64;
    let mean: Vec<f64> = (0..d).map(|t| train_raw.iter().map(|p| p[t]).sum::<f64>() / n).collect();
    let stddev: Vec<f64> = (0..d)
        .map(|t| libm::sqrt(train_raw.iter().map(|p| (p[t] - mean[t]) * (p[t] - mean[t])).sum::<f64>() / n))
        .collect();
    if let Some(t) = stddev.iter().position(|s| !(*s > MIN_STDDEV)) {
        return Err(Error::Numeric(format!("dimension {t} has zero variance on the train split")));
    }
    let st = Standardization { mean, stddev };
    let take = |lo: usize, hi: usize| -> Vec<Vec<f64>> { idx[lo..hi].iter().map(|&i| st.apply(&raw[i])).collect() };
    let a = split.train;
    let b = a + split.val;
    Ok(Splits { train: take(0, a), val: take(a, b), test: take(b, b + split.test), standardization: st })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn knotted_origin() {
        let p = curve_point(DatasetName::Knotted, 0.0, false).unwrap();
        assert_eq!(p, [0.0, -1.0, 0.0]);
        assert_eq!(p.map(|v| v * CURVE_SCALE), [0.0, -4.0, 0.0]);
    }

    #[test]
    fn names_round_trip() {
        for d in DatasetName::ALL {
            assert_eq!(d.as_str().parse::<DatasetName>().unwrap(), d);
        }
        assert_eq!("Bent-Lissajous".parse::<DatasetName>().unwrap(), DatasetName::BentLissajous);
        assert!("moons".parse::<DatasetName>().is_err());
    }

    #[test]
    fn checkerboard_stays_in_squares() {
        let (clean, _) = generate_stages(DatasetName::CheckerBoard, 5000, 3).unwrap();
        for p in clean {
            for v in p {
                let c = (v / 1.5).round() * 1.5;
                assert!(v >= c - 0.6 && v <= c + 0.6, "{v}");
            }
        }
    }

    #[test]
    fn pinwheel_arms_point_along_expected_angles() {
        let (clean, _) = generate_stages(DatasetName::Pinwheel, 5000, 2).unwrap();
        let mut hits = [0usize; 5];
        for p in clean {
            let th = libm::atan2(p[1], p[0]).rem_euclid(2.0 * PI);
            let k = ((th / (2.0 * PI / 5.0)).round() as usize) % 5;
            hits[k] += 1;
        }
        assert!(hits.iter().all(|&h| h > 800));
    }

    #[test]
    fn alphabet_uses_active_pixels() {
        let (clean, _) = generate_stages(DatasetName::Alphabet, 2000, 1).unwrap();
        for p in clean {
            let col = (p[0] / ALPHABET_CELL).floor() as usize;
            let row = 6 - (p[1] / ALPHABET_CELL).floor() as usize;
            assert_eq!(W_BITMAP[row].as_bytes()[col], b'1');
        }
    }

    #[test]
    fn split_standardizes_train() {
        let raw = generate(DatasetName::Spiral, 2000, 5).unwrap();
        let s = standardize_and_split(&raw, SplitSpec { train: 1000, val: 500, test: 500 }, 9).unwrap();
        for t in 0..2 {
            let m = s.train.iter().map(|p| p[t]).sum::<f64>() / 1000.0;
            let v = s.train.iter().map(|p| (p[t] - m) * (p[t] - m)).sum::<f64>() / 1000.0;
            assert!(m.abs() <= 1e-9 && (v.sqrt() - 1.0).abs() <= 1e-9);
        }
        let again = standardize_and_split(&raw, SplitSpec { train: 1000, val: 500, test: 500 }, 9).unwrap();
        assert_eq!(s, again);
        let flat: Vec<Vec<f64>> = raw.iter().map(|p| vec![p[0], 1.0]).collect();
        assert!(standardize_and_split(&flat, SplitSpec { train: 1000, val: 500, test: 500 }, 9).is_err());
        assert!(standardize_and_split(&raw[..100], SplitSpec::default(), 9).is_err());
    }
}
