mod common;

use std::collections::BTreeSet;

use common::{bfs_from_slack, fixture, load, random_grid, rng, Shape, FIXTURES};
use datakit::grid::{connected_component_of_slack, parse_matpower, serialize_matpower, TopologyPerturbation};
use proptest::prelude::*;
use rand::Rng;

/// Column sums straight from the case text: no parser, just the rows
/// between `mpc.<table> = [` and `];`.
fn column_sum(text: &str, table: &str, column: usize) -> f64 {
    let header = format!("mpc.{table} = [");
    text.lines()
        .skip_while(|l| !l.trim_start().starts_with(&header))
        .skip(1)
        .take_while(|l| !l.trim_start().starts_with("];"))
        .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('%'))
        .map(|l| l.split_whitespace().nth(column).unwrap().trim_end_matches(';').parse::<f64>().unwrap())
        .sum()
}

#[test]
fn rts24_column_sums_match_the_text() {
    let text = std::fs::read_to_string(fixture("case24_ieee_rts.m")).unwrap();
    let grid = parse_matpower(&text).unwrap();
    assert_eq!(grid.buses.len(), 24);
    let pd: f64 = grid.loads.iter().map(|l| l.pd).sum();
    let qd: f64 = grid.loads.iter().map(|l| l.qd).sum();
    let p_max: f64 = grid.generators.iter().map(|g| g.p_max).sum();
    let rate: f64 = grid.branches.iter().map(|b| b.rate_a).sum();
    assert!((pd - column_sum(&text, "bus", 2)).abs() < 1e-9);
    assert!((qd - column_sum(&text, "bus", 3)).abs() < 1e-9);
    assert!((p_max - column_sum(&text, "gen", 8)).abs() < 1e-9);
    assert!((rate - column_sum(&text, "branch", 5)).abs() < 1e-9);
    // the published totals of the test system
    assert!((pd - 2850.0).abs() < 1e-9);
}

#[test]
fn fixtures_round_trip() {
    for name in FIXTURES {
        let grid = load(name);
        grid.validate().unwrap();
        let back = parse_matpower(&serialize_matpower(&grid)).unwrap();
        assert!(back.approx_eq(&grid, 1e-12), "{name}");
        // a second pass is a textual fixpoint
        assert_eq!(serialize_matpower(&back), serialize_matpower(&parse_matpower(&serialize_matpower(&back)).unwrap()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn random_grids_round_trip(seed in any::<u64>(), buses in 2usize..25, extra in 0usize..10, gens in 1usize..5) {
        let grid = random_grid(&mut rng(seed), Shape { buses, extra_branches: extra, generators: gens, exotic: true });
        grid.validate().unwrap();
        let back = parse_matpower(&serialize_matpower(&grid)).unwrap();
        prop_assert!(back.approx_eq(&grid, 1e-12), "{:?}\nvs\n{:?}", grid, back);
    }

    /// Mutated case text is either rejected or yields a grid that satisfies
    /// every invariant.
    #[test]
    fn mutated_fixtures_never_yield_invalid_grids(
        which in 0usize..4,
        edits in prop::collection::vec((any::<prop::sample::Index>(), 0usize..6), 1..4),
    ) {
        let name = ["case9.m", "case14.m", "case24_ieee_rts.m", "case30.m"][which];
        let text = std::fs::read_to_string(fixture(name)).unwrap();
        let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
        for (at, kind) in edits {
            let i = at.index(lines.len());
            let mut cells: Vec<String> = lines[i].split('\t').map(str::to_string).collect();
            let c = at.index(cells.len().max(1)).min(cells.len() - 1);
            match kind {
                0 => cells[c] = "-1".into(),
                1 => cells[c] = "0".into(),
                2 => cells[c] = "999".into(),
                3 => cells[c] = "NaN".into(),
                4 => { cells.remove(c); }
                _ => { let dup = lines[i].clone(); lines.insert(i, dup); continue; }
            }
            lines[i] = cells.join("\t");
        }
        if let Ok(grid) = parse_matpower(&lines.join("\n")) {
            prop_assert!(grid.validate().is_ok(), "{:?}", grid.validate());
        }
    }
}

#[test]
fn slack_component_matches_independent_search() {
    let mut r = rng(20);
    for _ in 0..100 {
        let grid = random_grid(&mut r, Shape { buses: 20, extra_branches: 6, generators: 3, exotic: true });
        let m = grid.branches.len();
        let cut: BTreeSet<usize> = (0..r.gen_range(0..6)).map(|_| r.gen_range(0..m)).collect();
        let topo = TopologyPerturbation::new(cut.iter().copied(), []);
        assert_eq!(connected_component_of_slack(&grid, &topo), bfs_from_slack(&grid, &cut));
        assert_eq!(connected_component_of_slack(&grid, &TopologyPerturbation::base()).len(), 20);
    }
}
