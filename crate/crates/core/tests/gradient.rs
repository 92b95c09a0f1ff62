use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wdistortion::distortion::{build_poi_plan, ActiveSet, Backend, Multipliers};
use wdistortion::sigma_map::{pinned_sigma, BoolGrid};
use wdistortion::synthesis::{noise_image, ReferenceArtifacts};
use wdistortion::{Grid, StackSpec};

fn setup() -> (ReferenceArtifacts<f64>, Grid<f64>) {
    let reference = noise_image::<f64>(16, 16, 3, 1);
    let x = noise_image::<f64>(16, 16, 3, 2);
    let pins = BoolGrid::from_fn(16, 16, |r, c| (r as i64 - 8).abs() <= 1 && (c as i64 - 8).abs() <= 1);
    let map = pinned_sigma(&pins, 16.0).unwrap();
    let spec = StackSpec {
        num_layers: 3,
        widths: vec![6, 8, 12],
        kernel_size: 3,
        seed: 11,
    };
    let layers = [(0u16, 1u32), (1, 1), (2, 2), (3, 4)];
    let plan = build_poi_plan(&map, &layers, 10, 3, 5).unwrap();
    let art = ReferenceArtifacts::new(&reference, &spec, &map, &plan, &Multipliers::standard(3), &Backend::Diag)
        .unwrap();
    (art, x)
}

fn pattern(art: &ReferenceArtifacts<f64>, x: &Grid<f64>) -> Vec<bool> {
    art.net().forward_taped(x).unwrap().1.activation_pattern()
}

/// Central differences with step 1e-3 on 100 random coordinates; coordinates whose
/// stencil changes the rectifier activation pattern are redrawn.
#[test]
fn full_pipeline_gradient_matches_central_differences() {
    let (art, x) = setup();
    let active = ActiveSet::Index(0);
    let (_, g) = art.loss_and_gradient(&x, active).unwrap();
    let base = pattern(&art, &x);
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let h = 1e-3;
    let (mut checked, mut redrawn, mut worst) = (0, 0, 0.0f64);
    while checked < 100 {
        let i = rng.random_range(0..x.len());
        let mut p = x.clone();
        p.as_mut_slice()[i] += h;
        let mut m = x.clone();
        m.as_mut_slice()[i] -= h;
        if pattern(&art, &p) != base || pattern(&art, &m) != base {
            redrawn += 1;
            assert!(redrawn < 400, "too many kink crossings");
            continue;
        }
        let fd = (art.loss(&p, active).unwrap() - art.loss(&m, active).unwrap()) / (2.0 * h);
        let a = g.as_slice()[i];
        let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-12);
        worst = worst.max(rel);
        checked += 1;
    }
    println!("worst relative error {worst:e} over {checked} coordinates ({redrawn} redrawn)");
    assert!(worst <= 1e-4, "{worst}");
}

#[test]
fn small_step_agrees_everywhere() {
    let (art, x) = setup();
    let active = ActiveSet::Index(1);
    let (_, g) = art.loss_and_gradient(&x, active).unwrap();
    let h = 1e-6;
    for i in (0..x.len()).step_by(7) {
        let mut p = x.clone();
        p.as_mut_slice()[i] += h;
        let mut m = x.clone();
        m.as_mut_slice()[i] -= h;
        let fd = (art.loss(&p, active).unwrap() - art.loss(&m, active).unwrap()) / (2.0 * h);
        let a = g.as_slice()[i];
        assert!((a - fd).abs() <= 1e-5 * a.abs().max(fd.abs()).max(1.0), "{i}: {a} vs {fd}");
    }
}

#[test]
fn scalar_quadratic_case() {
    // one pixel, raw layer only, sigma 0: loss (x - r)^2, gradient 2 (x - r)
    let reference = Grid::new(1, 1, 1, vec![0.25f64]).unwrap();
    let x = Grid::new(1, 1, 1, vec![0.75f64]).unwrap();
    let map = wdistortion::sigma_map::constant_sigma((1, 1), 0.0).unwrap();
    let plan = wdistortion::PoiPlan::center(&[(0, 1, (1, 1))]).unwrap();
    let spec = StackSpec {
        num_layers: 1,
        widths: vec![1],
        kernel_size: 1,
        seed: 0,
    };
    let art = ReferenceArtifacts::new(&reference, &spec, &map, &plan, &Multipliers::uniform(), &Backend::Diag).unwrap();
    let (l, g) = art.loss_and_gradient(&x, ActiveSet::None).unwrap();
    assert_eq!(l, 0.25);
    assert_eq!(g.as_slice(), &[1.0]);
}
