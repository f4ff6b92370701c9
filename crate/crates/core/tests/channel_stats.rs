use std::path::PathBuf;

use num_complex::Complex64;
use statrs::distribution::{ContinuousCDF, Normal};
use twohop_ia::channel::{
    draw_block_channels, hop_output, silent, BlockStreams, NoiseConfig, NoiseSamples, Purpose, RngStream,
};
use twohop_ia::linalg::CMatrix;

const GOLDEN_SEED: u64 = 20_240_601;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[test]
fn golden_channel_draw() {
    let state = draw_block_channels(BlockStreams::new(GOLDEN_SEED, 0).stream(Purpose::Channel));
    let path = fixture("channel_seed.txt");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        let header = format!("# master_seed={GOLDEN_SEED} block=0 purpose=channel\n# hop slot row col re im\n");
        std::fs::write(&path, header + &state.to_fixture_text()).unwrap();
    }
    let text = std::fs::read_to_string(&path).expect("golden fixture present");
    let frozen = twohop_ia::BlockChannelState::from_fixture_text(&text).unwrap();
    assert_eq!(state, frozen, "channel generation changed; regenerate only on purpose");
}

#[test]
fn distinct_streams_differ_everywhere() {
    let a = draw_block_channels(RngStream::new(5, 0)).coefficients();
    let b = draw_block_channels(RngStream::new(5, 4)).coefficients();
    assert!(a.iter().zip(&b).all(|(x, y)| x != y));
    let again = draw_block_channels(RngStream::new(5, 0)).coefficients();
    assert_eq!(a, again);
}

fn coefficient_ensemble(n: u64) -> Vec<Vec<Complex64>> {
    (0..n)
        .map(|b| draw_block_channels(BlockStreams::new(77, b).stream(Purpose::Channel)).coefficients())
        .collect()
}

#[test]
fn per_coefficient_moments() {
    let draws = coefficient_ensemble(100_000);
    let n = draws.len() as f64;
    for k in 0..24 {
        let mean: Complex64 = draws.iter().map(|d| d[k]).sum::<Complex64>() / n;
        let var = draws.iter().map(|d| (d[k] - mean).norm_sqr()).sum::<f64>() / (n - 1.0);
        assert!(mean.norm() < 0.02, "coefficient {k}: mean {mean}");
        assert!((0.98..=1.02).contains(&var), "coefficient {k}: variance {var}");
    }
}

/// Two-sided Kolmogorov-Smirnov statistic against a continuous cdf.
fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

#[test]
fn real_and_imaginary_parts_pass_ks_at_0_001() {
    // 10^5 values per part, taken from the first coefficient of each block
    // so all are independent.
    let draws = coefficient_ensemble(100_000);
    let half = Normal::new(0.0, 0.5f64.sqrt()).unwrap();
    let alpha: f64 = 0.001;
    let critical = (-(alpha / 2.0).ln() / 2.0).sqrt() / (draws.len() as f64).sqrt();
    for part in [|z: Complex64| z.re, |z: Complex64| z.im] {
        for k in [0, 13, 23] {
            let d = ks_statistic(draws.iter().map(|b| part(b[k])).collect(), |x| half.cdf(x));
            assert!(d < critical, "coefficient {k}: D = {d}, critical {critical}");
        }
    }
}

#[test]
fn hop_output_examples() {
    let a = c(1.5, -2.0);
    let b = c(0.0, 3.0);
    assert_eq!(hop_output(&CMatrix::identity(2), [a, b], [silent(); 2]), [a, b]);
    let m = CMatrix::from_real_rows(&[[1.0, 1.0], [1.0, -1.0]]);
    assert_eq!(hop_output(&m, [c(1.0, 0.0); 2], [silent(); 2]), [c(2.0, 0.0), c(0.0, 0.0)]);
    // one silent input leaves the other column's action
    let ch = CMatrix::from_rows(&[[c(0.3, 1.0), c(2.0, -1.0)], [c(-1.0, 0.5), c(0.25, 0.0)]]);
    assert_eq!(hop_output(&ch, [a, silent()], [silent(); 2]), [ch[(0, 0)] * a, ch[(1, 0)] * a]);
    assert_eq!(silent(), c(0.0, 0.0));
}

#[test]
fn hop_output_is_linear() {
    let mut rng = RngStream::new(9, 1).rng();
    for _ in 0..1000 {
        let ch = draw_block_channels(RngStream::new(9, 2)).h[0].clone();
        let x = [twohop_ia::channel::complex_normal(&mut rng), twohop_ia::channel::complex_normal(&mut rng)];
        let y = [twohop_ia::channel::complex_normal(&mut rng), twohop_ia::channel::complex_normal(&mut rng)];
        let (al, be) = (c(0.7, -1.2), c(-2.0, 0.4));
        let z = [silent(); 2];
        let lhs = hop_output(&ch, [al * x[0] + be * y[0], al * x[1] + be * y[1]], z);
        let hx = hop_output(&ch, x, z);
        let hy = hop_output(&ch, y, z);
        for i in 0..2 {
            assert!((lhs[i] - (al * hx[i] + be * hy[i])).norm() <= 1e-12 * (1.0 + lhs[i].norm()));
        }
    }
}

#[test]
fn noise_moments_and_disabled_mode() {
    let unit = NoiseConfig::unit();
    let n = 100_000u64;
    let mut power = [0.0f64; 2];
    for b in 0..n {
        let s = NoiseSamples::draw(&unit, BlockStreams::new(3, b).stream(Purpose::Noise));
        let out = hop_output(&CMatrix::identity(2), [silent(); 2], s.relay_pair(1));
        for i in 0..2 {
            power[i] += out[i].norm_sqr();
        }
    }
    for p in power {
        let v = p / n as f64;
        assert!((0.98..=1.02).contains(&v), "variance {v}");
    }
    let off = NoiseSamples::draw(&NoiseConfig::off(), BlockStreams::new(3, 0).stream(Purpose::Noise));
    assert!(off.to_vec().iter().all(|z| *z == c(0.0, 0.0)));
}
