//! Test-only oracles, independent of the code paths they check.
#![allow(dead_code)]

use planecast::geometry::{PlanecastState, TechniqueMode};
use planecast::math::{Quat, Vec3};
use rand::Rng;

/// Rodrigues rotation of `v` about unit-normalised `axis` by `angle` radians.
pub fn rodrigues(axis: Vec3, angle: f64, v: Vec3) -> Vec3 {
    let k = axis.normalized().unwrap();
    let (s, c) = angle.sin_cos();
    v * c + k.cross(v) * s + k * (k.dot(v) * (1.0 - c))
}

pub fn random_unit_vec<R: Rng>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v * (1.0 / n);
        }
    }
}

pub fn random_quat<R: Rng>(rng: &mut R) -> Quat {
    Quat::from_axis_angle(random_unit_vec(rng), rng.gen_range(0.0..std::f64::consts::TAU))
}

/// A state reached by a random mix of rotations and touches.
pub fn random_state<R: Rng>(rng: &mut R, mode: TechniqueMode) -> (PlanecastState, Quat) {
    let mut s = PlanecastState::new(mode, rng.gen_range(0.01..0.5)).unwrap();
    let mut q = Quat::IDENTITY;
    for _ in 0..rng.gen_range(1..8) {
        if rng.gen_bool(0.5) {
            q = random_quat(rng);
            s = s.apply_rotation(q).unwrap();
        } else {
            s = s.apply_touch(rng.gen_range(-400.0..400.0), rng.gen_range(-400.0..400.0)).unwrap();
        }
    }
    (s, q)
}

/// Sums-of-squares F for a one-way repeated-measures design, computed from
/// the total/subject/treatment partition with plain loops.
pub fn brute_force_rm_f(m: &[Vec<f64>]) -> (f64, usize, usize) {
    let n = m.len();
    let k = m[0].len();
    let mut total = 0.0;
    for row in m {
        for x in row {
            total += x;
        }
    }
    let grand = total / (n * k) as f64;
    let mut ss_total = 0.0;
    for row in m {
        for x in row {
            ss_total += (x - grand) * (x - grand);
        }
    }
    let mut ss_subjects = 0.0;
    for row in m {
        let mut s = 0.0;
        for x in row {
            s += x;
        }
        let mean = s / k as f64;
        ss_subjects += k as f64 * (mean - grand) * (mean - grand);
    }
    let mut ss_treat = 0.0;
    for j in 0..k {
        let mut s = 0.0;
        for row in m {
            s += row[j];
        }
        let mean = s / n as f64;
        ss_treat += n as f64 * (mean - grand) * (mean - grand);
    }
    let ss_err = ss_total - ss_subjects - ss_treat;
    let df1 = k - 1;
    let df2 = (k - 1) * (n - 1);
    ((ss_treat / df1 as f64) / (ss_err / df2 as f64), df1, df2)
}

/// Paired t statistic for the two columns of an n × 2 matrix.
pub fn paired_t(m: &[Vec<f64>]) -> f64 {
    let d: Vec<f64> = m.iter().map(|r| r[0] - r[1]).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    mean / (var / n).sqrt()
}

pub fn random_matrix<R: Rng>(rng: &mut R, n: usize, k: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let subject = rng.gen_range(-5.0..5.0);
            (0..k).map(|j| subject + j as f64 * 0.3 + rng.gen_range(-2.0..2.0)).collect()
        })
        .collect()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}
