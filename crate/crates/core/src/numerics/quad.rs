//! Globally adaptive Gauss–Kronrod (7, 15) quadrature.

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> QuadResult {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    QuadResult { value: k * h, error: ((k - g) * h).abs() }
}

/// Integrates `f` over `[a, b]`, bisecting the worst interval until the
/// summed error estimate meets `max(abs_tol, rel_tol·|I|)`.
pub fn gauss_kronrod<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> QuadResult {
    if b == a {
        return QuadResult { value: 0.0, error: 0.0 };
    }
    let mut parts = vec![(a, b, kronrod(&f, a, b))];
    for _ in 0..2000 {
        let total: f64 = parts.iter().map(|p| p.2.value).sum();
        let err: f64 = parts.iter().map(|p| p.2.error).sum();
        if err <= abs_tol.max(rel_tol * total.abs()) {
            break;
        }
        let worst = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2.error.total_cmp(&y.1 .2.error))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let (lo, hi, _) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        parts.push((lo, mid, kronrod(&f, lo, mid)));
        parts.push((mid, hi, kronrod(&f, mid, hi)));
    }
    let mut value = 0.0;
    let mut error = 0.0;
    parts.sort_by(|x, y| x.0.total_cmp(&y.0));
    for p in &parts {
        value += p.2.value;
        error += p.2.error;
    }
    QuadResult { value, error }
}

fn kronrod_n<const N: usize, F: Fn(f64) -> [f64; N]>(f: &F, a: f64, b: f64) -> ([f64; N], f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = [0.0; N];
    let mut g = [0.0; N];
    for n in 0..N {
        k[n] = WGK[7] * fc[n];
        g[n] = WG[3] * fc[n];
    }
    for i in 0..7 {
        let dx = h * XGK[i];
        let (lo, hi) = (f(c - dx), f(c + dx));
        for n in 0..N {
            let s = lo[n] + hi[n];
            k[n] += WGK[i] * s;
            if i % 2 == 1 {
                g[n] += WG[i / 2] * s;
            }
        }
    }
    let err = (0..N).map(|n| ((k[n] - g[n]) * h).abs()).fold(0.0, f64::max);
    (k.map(|v| v * h), err)
}

/// Vector-valued [`gauss_kronrod`]; the error estimate is the worst component.
pub fn gauss_kronrod_n<const N: usize, F: Fn(f64) -> [f64; N]>(f: F, a: f64, b: f64, abs_tol: f64) -> [f64; N] {
    if b == a {
        return [0.0; N];
    }
    let mut parts = vec![(a, b, kronrod_n(&f, a, b))];
    for _ in 0..2000 {
        let err: f64 = parts.iter().map(|p| p.2 .1).sum();
        if err <= abs_tol {
            break;
        }
        let worst = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2 .1.total_cmp(&y.1 .2 .1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let (lo, hi, _) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        parts.push((lo, mid, kronrod_n(&f, lo, mid)));
        parts.push((mid, hi, kronrod_n(&f, mid, hi)));
    }
    parts.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut out = [0.0; N];
    for p in &parts {
        for n in 0..N {
            out[n] += p.2 .0[n];
        }
    }
    out
}
