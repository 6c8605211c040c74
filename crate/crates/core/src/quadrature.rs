//! Gauss rules and adaptive Gauss-Kronrod integration of vector-valued
//! integrands.

/// Two-point Gauss-Legendre nodes on [-1, 1] (weights are 1).
pub const GAUSS2: [f64; 2] = [-0.577_350_269_189_625_8, 0.577_350_269_189_625_8];

/// Three-point Gauss-Legendre rule on [-1, 1] as (node, weight).
pub const GAUSS3: [(f64, f64); 3] = [
    (-0.774_596_669_241_483_4, 5.0 / 9.0),
    (0.0, 8.0 / 9.0),
    (0.774_596_669_241_483_4, 5.0 / 9.0),
];

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

// Gauss weights for the odd-indexed Kronrod nodes (XGK[1], XGK[3], XGK[5], XGK[7]).
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

struct Segment {
    a: f64,
    b: f64,
    value: Vec<f64>,
    error: f64,
}

fn gk15<F>(integrand: &mut F, a: f64, b: f64, dim: usize) -> Segment
where
    F: FnMut(f64, &mut [f64]),
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut kronrod = vec![0.0; dim];
    let mut gauss = vec![0.0; dim];
    let mut buf = vec![0.0; dim];
    for (k, (&x, &wk)) in XGK.iter().zip(&WGK).enumerate() {
        let nodes: &[f64] = if x == 0.0 {
            &[center]
        } else {
            &[center - half * x, center + half * x]
        };
        for &t in nodes {
            buf.iter_mut().for_each(|v| *v = 0.0);
            integrand(t, &mut buf);
            for d in 0..dim {
                kronrod[d] += wk * buf[d];
                if k % 2 == 1 {
                    gauss[d] += WG[k / 2] * buf[d];
                }
            }
        }
    }
    let mut error = 0.0_f64;
    for d in 0..dim {
        kronrod[d] *= half;
        gauss[d] *= half;
        error = error.max((kronrod[d] - gauss[d]).abs());
    }
    Segment {
        a,
        b,
        value: kronrod,
        error,
    }
}

/// Integrates the vector-valued `integrand` over `[a, b]`.
///
/// The integrand writes its value at `t` into the provided buffer. Segments
/// are bisected (largest error first) until the summed Gauss/Kronrod
/// discrepancy, measured in the max-norm, is below
/// `max(abs_tol, rel_tol * ‖I‖∞)` or `max_segments` is reached.
pub fn integrate_vec<F>(
    mut integrand: F,
    a: f64,
    b: f64,
    dim: usize,
    abs_tol: f64,
    rel_tol: f64,
    max_segments: usize,
) -> Vec<f64>
where
    F: FnMut(f64, &mut [f64]),
{
    let mut segments = vec![gk15(&mut integrand, a, b, dim)];
    loop {
        let total_err: f64 = segments.iter().map(|s| s.error).sum();
        let mut total = vec![0.0; dim];
        for s in &segments {
            for (acc, v) in total.iter_mut().zip(&s.value) {
                *acc += v;
            }
        }
        let norm = total.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if total_err <= abs_tol.max(rel_tol * norm) || segments.len() >= max_segments {
            return total;
        }
        let worst = segments
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .map(|(i, _)| i)
            .unwrap();
        let seg = segments.swap_remove(worst);
        let mid = 0.5 * (seg.a + seg.b);
        if !(mid > seg.a && mid < seg.b) {
            // cannot split further in floating point
            segments.push(Segment { error: 0.0, ..seg });
            continue;
        }
        segments.push(gk15(&mut integrand, seg.a, mid, dim));
        segments.push(gk15(&mut integrand, mid, seg.b, dim));
    }
}
