//! Multiscale structural complexity of a grayscale frame.
//!
//! A frame is repeatedly coarse-grained by replacing each `G x G` block with
//! its mean. The overlap between two levels is the normalized inner product
//! of both levels replicated back to the original resolution, and the
//! complexity of a frame sums, over consecutive scales, the mismatch between
//! the cross-scale overlap and the mean of the two same-scale overlaps.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ComplexityError {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("pixel value {value} at index {index} outside [-1, 1]")]
    PixelRange { index: usize, value: f64 },
    #[error("level {level} out of range (pyramid depth {depth})")]
    Index { level: usize, depth: usize },
}

pub type Result<T> = std::result::Result<T, ComplexityError>;

/// Square grid of real pixel values in `[-1, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    side: usize,
    pixels: Vec<f64>,
}

impl Frame {
    pub fn new(side: usize, pixels: Vec<f64>) -> Result<Self> {
        if side < 2 {
            return Err(ComplexityError::Dimension(format!(
                "frame side {side} must be at least 2"
            )));
        }
        if pixels.len() != side * side {
            return Err(ComplexityError::Dimension(format!(
                "expected {} pixels for a {side}x{side} frame, got {}",
                side * side,
                pixels.len()
            )));
        }
        if let Some((index, &value)) = pixels.iter().enumerate().find(|(_, v)| !(-1.0..=1.0).contains(*v)) {
            return Err(ComplexityError::PixelRange { index, value });
        }
        Ok(Self { side, pixels })
    }

    pub fn constant(side: usize, value: f64) -> Result<Self> {
        Self::new(side, vec![value; side * side])
    }

    pub fn from_fn(side: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut pixels = Vec::with_capacity(side * side);
        for r in 0..side {
            for c in 0..side {
                pixels.push(f(r, c));
            }
        }
        Self::new(side, pixels)
    }

    /// Builds a frame from a row-major 8-bit grayscale buffer.
    ///
    /// Bytes map to `v / 127.5 - 1`. The image is center-cropped to the
    /// largest square whose side is a power of `block`, so that the default
    /// depth coarse-grains all the way down to one pixel.
    pub fn from_gray_bytes(bytes: &[u8], width: usize, height: usize, block: usize) -> Result<Self> {
        if bytes.len() != width * height {
            return Err(ComplexityError::Dimension(format!(
                "buffer of {} bytes does not match {width}x{height}",
                bytes.len()
            )));
        }
        if block < 2 {
            return Err(ComplexityError::Dimension(format!("block size {block} < 2")));
        }
        let limit = width.min(height);
        if limit < block {
            return Err(ComplexityError::Dimension(format!(
                "{width}x{height} image is smaller than one {block}x{block} block"
            )));
        }
        let mut side = block;
        while side * block <= limit {
            side *= block;
        }
        let top = (height - side) / 2;
        let left = (width - side) / 2;
        Self::from_fn(side, |r, c| {
            f64::from(bytes[(top + r) * width + left + c]) / 127.5 - 1.0
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.side + col]
    }
}

/// Number of coarse-graining steps that reduce `side` to a single pixel, if
/// `side` is an exact power of `block`.
pub fn full_depth(side: usize, block: usize) -> Option<usize> {
    if block < 2 || side < block {
        return None;
    }
    let mut s = side;
    let mut depth = 0;
    while s > 1 {
        if !s.is_multiple_of(block) {
            return None;
        }
        s /= block;
        depth += 1;
    }
    Some(depth)
}

/// Coarse-grained levels of a frame. `levels[0]` is the frame itself.
#[derive(Debug, Clone)]
pub struct ScalePyramid {
    levels: Vec<Vec<f64>>,
    sides: Vec<usize>,
    block: usize,
}

impl ScalePyramid {
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn block(&self) -> usize {
        self.block
    }

    pub fn side(&self, level: usize) -> usize {
        self.sides[level]
    }

    pub fn level(&self, level: usize) -> &[f64] {
        &self.levels[level]
    }

    fn check(&self, level: usize) -> Result<()> {
        if level > self.depth() {
            return Err(ComplexityError::Index {
                level,
                depth: self.depth(),
            });
        }
        Ok(())
    }

    /// Overlap `O_{m,n}` between levels `m` and `n`.
    ///
    /// Let `k = max(m, n)` and `j = min(m, n)`. Every level-`k` pixel covers a
    /// `G^(k-j) x G^(k-j)` patch of level-`j` pixels, each of which covers
    /// `G^(2j)` original positions, so the sum over all original positions
    /// reduces to a sum over level-`k` pixels of `s_k * sum(patch of s_j)`.
    pub fn overlap(&self, m: usize, n: usize) -> Result<f64> {
        self.check(m)?;
        self.check(n)?;
        let (coarse, fine) = if m >= n { (m, n) } else { (n, m) };
        let cs = self.sides[coarse];
        let fs = self.sides[fine];
        let span = fs / cs;
        let coarse_px = &self.levels[coarse];
        let fine_px = &self.levels[fine];
        let mut total = 0.0;
        for a in 0..cs {
            for e in 0..cs {
                let mut patch = 0.0;
                for da in 0..span {
                    let row = (a * span + da) * fs + e * span;
                    patch += fine_px[row..row + span].iter().sum::<f64>();
                }
                total += coarse_px[a * cs + e] * patch;
            }
        }
        // Each fine pixel stands for (L0 / fs)^2 original positions.
        let l0 = self.sides[0] as f64;
        let weight = (l0 / fs as f64).powi(2);
        Ok(total * weight / (l0 * l0))
    }

    /// Mean over original positions of `(up(n) - up(n+1))^2`. Algebraically
    /// `O(n,n) + O(n+1,n+1) - 2 O(n+1,n)`, but exactly 0 when every block of
    /// level `n` is constant.
    pub fn detail_energy(&self, n: usize) -> Result<f64> {
        self.check(n + 1)?;
        let fs = self.sides[n];
        let cs = self.sides[n + 1];
        let fine = &self.levels[n];
        let coarse = &self.levels[n + 1];
        let mut total = 0.0;
        for a in 0..fs {
            for e in 0..fs {
                let d = fine[a * fs + e] - coarse[(a / self.block) * cs + e / self.block];
                total += d * d;
            }
        }
        Ok(total / (fs * fs) as f64)
    }
}

/// Coarse-grains `frame` `depth` times with `block x block` means.
pub fn build_pyramid(frame: &Frame, block: usize, depth: usize) -> Result<ScalePyramid> {
    if block < 2 {
        return Err(ComplexityError::Dimension(format!("block size {block} < 2")));
    }
    if depth < 1 {
        return Err(ComplexityError::Dimension("depth must be at least 1".into()));
    }
    let divisor = block
        .checked_pow(depth as u32)
        .ok_or_else(|| ComplexityError::Dimension("block^depth overflows".into()))?;
    if !frame.side.is_multiple_of(divisor) {
        return Err(ComplexityError::Dimension(format!(
            "side {} not divisible by {block}^{depth} = {divisor}",
            frame.side
        )));
    }
    let mut levels = Vec::with_capacity(depth + 1);
    let mut sides = Vec::with_capacity(depth + 1);
    levels.push(frame.pixels.clone());
    sides.push(frame.side);
    let norm = 1.0 / (block * block) as f64;
    for _ in 0..depth {
        let prev = levels.last().expect("pyramid has a base level");
        let ps = *sides.last().expect("pyramid has a base side");
        let ns = ps / block;
        let mut next = vec![0.0; ns * ns];
        for a in 0..ns {
            for e in 0..ns {
                // Summing deviations from the first pixel keeps constant
                // blocks exactly constant.
                let first = prev[a * block * ps + e * block];
                let mut dev = 0.0;
                for da in 0..block {
                    let row = (a * block + da) * ps + e * block;
                    dev += prev[row..row + block].iter().map(|v| v - first).sum::<f64>();
                }
                next[a * ns + e] = first + dev * norm;
            }
        }
        levels.push(next);
        sides.push(ns);
    }
    Ok(ScalePyramid { levels, sides, block })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexityReport {
    /// `C_n` for `n in 0..N`.
    pub per_scale: Vec<f64>,
    pub total: f64,
    /// `(N+1) x (N+1)` matrix of overlaps, `overlaps[m][n] = O_{m,n}`.
    pub overlaps: Vec<Vec<f64>>,
}

pub fn spatial_complexity(frame: &Frame, block: usize, depth: usize) -> Result<ComplexityReport> {
    let pyramid = build_pyramid(frame, block, depth)?;
    complexity_of(&pyramid)
}

/// Complexity with the default parameters: `G = 2`, coarse-grain to one pixel.
pub fn default_complexity(frame: &Frame) -> Result<ComplexityReport> {
    let depth = full_depth(frame.side(), 2)
        .ok_or_else(|| ComplexityError::Dimension(format!("side {} is not a power of 2", frame.side())))?;
    spatial_complexity(frame, 2, depth)
}

pub fn complexity_of(pyramid: &ScalePyramid) -> Result<ComplexityReport> {
    let n = pyramid.depth();
    let mut overlaps = vec![vec![0.0; n + 1]; n + 1];
    for (m, row) in overlaps.iter_mut().enumerate() {
        for (k, cell) in row.iter_mut().enumerate() {
            *cell = pyramid.overlap(m, k)?;
        }
    }
    // |O(s+1,s) - (O(s,s) + O(s+1,s+1)) / 2| in its non-cancelling form.
    let per_scale = (0..n)
        .map(|s| pyramid.detail_energy(s).map(|d| 0.5 * d))
        .collect::<Result<Vec<f64>>>()?;
    let total = per_scale.iter().sum();
    Ok(ComplexityReport {
        per_scale,
        total,
        overlaps,
    })
}

/// Min-max scaling of raw complexities onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MinMaxScaler {
    pub min: f64,
    pub max: f64,
}

impl MinMaxScaler {
    /// Returns `None` for an empty input.
    pub fn fit(values: &[f64]) -> Option<Self> {
        let mut it = values.iter().copied();
        let first = it.next()?;
        let (min, max) = it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v)));
        Some(Self { min, max })
    }

    /// A degenerate range maps everything to 0.
    pub fn transform(&self, value: f64) -> f64 {
        let range = self.max - self.min;
        if range <= 0.0 {
            0.0
        } else {
            ((value - self.min) / range).clamp(0.0, 1.0)
        }
    }
}
