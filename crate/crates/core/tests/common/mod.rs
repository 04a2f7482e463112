//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use cdio::predictor::{loss_and_gradient, separable_dataset, PredictorConfig, PreferencePredictor};
use cdio::scheduler::StationaryInstance;

/// Straight-line reference: every level is expanded back to full resolution
/// and overlaps are plain sums over original pixel positions.
pub fn reference_levels(pixels: &[f64], side: usize, block: usize, depth: usize) -> Vec<Vec<f64>> {
    let mut levels = vec![pixels.to_vec()];
    let mut cur = pixels.to_vec();
    let mut cur_side = side;
    for _ in 0..depth {
        let next_side = cur_side / block;
        let mut next = vec![0.0; next_side * next_side];
        for r in 0..cur_side {
            for c in 0..cur_side {
                next[(r / block) * next_side + c / block] += cur[r * cur_side + c];
            }
        }
        for v in next.iter_mut() {
            *v /= (block * block) as f64;
        }
        // Expand to full resolution.
        let scale = side / next_side;
        let mut full = vec![0.0; side * side];
        for r in 0..side {
            for c in 0..side {
                full[r * side + c] = next[(r / scale) * next_side + c / scale];
            }
        }
        levels.push(full);
        cur = next;
        cur_side = next_side;
    }
    levels
}

pub fn reference_overlap(levels: &[Vec<f64>], m: usize, n: usize) -> f64 {
    let count = levels[0].len() as f64;
    levels[m].iter().zip(&levels[n]).map(|(a, b)| a * b).sum::<f64>() / count
}

pub fn reference_complexity(pixels: &[f64], side: usize, block: usize, depth: usize) -> f64 {
    let levels = reference_levels(pixels, side, block, depth);
    (0..depth)
        .map(|k| {
            let o = |m, n| reference_overlap(&levels, m, n);
            (o(k + 1, k) - 0.5 * (o(k, k) + o(k + 1, k + 1))).abs()
        })
        .sum()
}

fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Largest relative error between the analytic gradient and central
/// differences with step `h`, over every parameter.
pub fn max_gradient_error(seed: u64, h: f64) -> f64 {
    let config = PredictorConfig {
        layers: 2,
        hidden: 4,
        seq_len: 5,
    };
    let mut p = PreferencePredictor::new(config, seed).unwrap();
    // Larger weights than the default init so every gate is exercised.
    let scaled: Vec<f64> = p.flat_parameters().iter().map(|w| w * 8.0).collect();
    p.set_flat_parameters(&scaled).unwrap();
    let data = separable_dataset(6, 5, seed + 100);
    let (_, grad) = loss_and_gradient(&p, &data).unwrap();
    let base = p.flat_parameters();
    let mut worst: f64 = 0.0;
    for i in 0..base.len() {
        let mut q = p.clone();
        let mut plus = base.clone();
        plus[i] += h;
        q.set_flat_parameters(&plus).unwrap();
        let (lp, _) = loss_and_gradient(&q, &data).unwrap();
        let mut minus = base.clone();
        minus[i] -= h;
        q.set_flat_parameters(&minus).unwrap();
        let (lm, _) = loss_and_gradient(&q, &data).unwrap();
        let numeric = (lp - lm) / (2.0 * h);
        worst = worst.max(relative_error(grad[i], numeric));
    }
    worst
}

/// Every server assignment for `tasks` tasks over `servers` servers.
pub fn all_schemes(tasks: usize, servers: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..tasks {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..servers).map(move |s| {
                    let mut v = prefix.clone();
                    v.push(s);
                    v
                })
            })
            .collect();
    }
    out
}

/// Cheapest expected cost over schemes whose every arm is feasible with
/// probability at least `threshold`.
pub fn brute_force_optimum(inst: &StationaryInstance, threshold: f64) -> (Vec<usize>, f64) {
    all_schemes(inst.arms.len(), inst.tiers.len())
        .into_iter()
        .filter(|s| {
            s.iter()
                .enumerate()
                .all(|(t, &k)| inst.arms[t][k].p_feasible >= threshold)
        })
        .map(|s| {
            let c: f64 = s.iter().enumerate().map(|(t, &k)| inst.arms[t][k].mean_cost).sum();
            (s, c)
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("some feasible scheme")
}
