use std::sync::OnceLock;

use num_bigint::BigInt;
use num_traits::Zero;
use proptest::prelude::*;

use bimrecon::candidates::{pair_walls, CandidateParams, CandidateSet};
use bimrecon::complex::{build_complex, exact_arrangement_2d, CellComplex, ComplexParams, ExactLine, Q};
use bimrecon::config::Config;
use bimrecon::fixtures::box_room_at;
use bimrecon::geom::Vec2;
use bimrecon::ilp::{build_model, objective_of, solve, validate_labels, CellLabels, ModelOptions, SolveParams};
use bimrecon::model::{enclosed_volume, export_binary, export_obj, extract, read_binary, MeshSelection};
use bimrecon::priors::Priors;

fn two_rooms() -> &'static (CandidateSet, CellComplex) {
    static CELLS: OnceLock<(CandidateSet, CellComplex)> = OnceLock::new();
    CELLS.get_or_init(|| {
        let mut surfaces = box_room_at([0.0, 0.0, 0.0], [4.0, 5.0, 2.6], 0, 2);
        surfaces.extend(box_room_at([4.24, 0.0, 0.0], [8.24, 5.0, 2.6], 1, 2));
        let set = pair_walls(surfaces, 2, &CandidateParams::default());
        let cx = build_complex(&set, &ComplexParams::default()).unwrap();
        (set, cx)
    })
}

fn q(v: i64) -> Q {
    Q::from_integer(BigInt::from(v))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn arrangement_tiles_its_box(lines in prop::collection::vec((0.0..std::f64::consts::PI, 0.5..7.5f64, 0.5..7.5f64), 0..10)) {
        let lines: Vec<ExactLine> = lines
            .iter()
            .map(|&(t, x, y)| {
                let n = Vec2::new(t.cos(), t.sin());
                ExactLine::snapped(n, n.dot(&Vec2::new(x, y)))
            })
            .collect();
        let arr = exact_arrangement_2d(&lines, [q(0), q(0)], [q(8), q(8)]);
        prop_assert_eq!(arr.euler_characteristic(), 2);
        let area = (0..arr.faces.len()).fold(Q::zero(), |a, f| a + arr.face_area_exact(f));
        prop_assert_eq!(area, q(64));
        for e in &arr.edges {
            prop_assert!(!e.faces.is_empty() && e.faces.len() <= 2);
            prop_assert_eq!(e.faces.len() == 1, e.line.is_none());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn any_priors_give_a_consistent_model(
        seed in any::<u64>(),
        alpha in 0.0..0.5f64,
        zero_rate in 0.0..0.8f64,
    ) {
        use rand::{Rng, SeedableRng};
        let (set, cx) = two_rooms();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let cells = (0..cx.cells.len())
            .map(|_| {
                let mut p: Vec<f64> = (0..3).map(|_| rng.random_range(0.01..1.0)).collect();
                for v in p.iter_mut().skip(1) {
                    if rng.random_bool(zero_rate) {
                        *v = 0.0;
                    }
                }
                let s: f64 = p.iter().sum();
                p.iter().map(|v| v / s).collect()
            })
            .collect();
        let faces = (0..cx.faces.len()).map(|_| rng.random_range(0.0..1.0)).collect();
        let priors = Priors { n_labels: 2, cells, faces };

        let opts = ModelOptions { alpha, ..ModelOptions::default() };
        let model = build_model(cx, &priors, set.walls.len(), &opts, &[]).unwrap();
        let sol = solve(&model, &SolveParams::default()).unwrap();
        prop_assert!(sol.is_feasible());
        prop_assert!(model.violated_rows(&sol.values).is_empty());
        let labels = CellLabels::from_values(&model, &sol.values);
        prop_assert!(validate_labels(&labels, cx).is_empty());
        let f = objective_of(&labels, cx, &priors, alpha);
        prop_assert!((f - sol.objective).abs() <= 1e-9 * sol.objective.abs().max(1.0));
        prop_assert!(sol.objective <= model.objective(&model.all_outside()) + 1e-9);

        let m = extract(&labels, cx, set);
        let rooms: f64 = m.rooms.iter().map(|r| r.volume).sum();
        prop_assert!((rooms + m.outside_volume - m.bbox_volume).abs() <= 1e-9 * m.bbox_volume);
        for r in &m.rooms {
            prop_assert!((enclosed_volume(&r.boundary) - r.volume).abs() <= 1e-6 * r.volume.max(1.0));
        }
        for w in &m.walls {
            prop_assert!((enclosed_volume(&w.boundary) - w.volume).abs() <= 1e-6 * w.volume.max(1.0));
        }
        let obj = export_obj(&m, &MeshSelection::All).unwrap();
        let tris = read_binary(&export_binary(&m, &MeshSelection::All).unwrap()).unwrap();
        prop_assert_eq!(obj.lines().filter(|l| l.starts_with("f ")).count(), tris.len());
    }

    #[test]
    fn rendered_config_parses_back(
        seed in any::<u64>(),
        alpha in 0.0..10.0f64,
        gap in 0.0..0.5f64,
        prune in any::<bool>(),
        subsample in 0.001..0.5f64,
    ) {
        let mut cfg = Config::default();
        cfg.seed = seed;
        cfg.alpha = alpha;
        cfg.mip_gap = gap;
        cfg.prune_rooms = prune;
        cfg.subsample = subsample;
        prop_assert_eq!(Config::parse(&cfg.render()).unwrap(), cfg);
    }
}
