//! Timing harness for the heavy analysis paths (not part of the test suite).

use std::time::Instant;

use bats_flan::bp::StepSchedule;
use bats_flan::inact;
use bats_flan::model::{
    solvability_from_rank, CodeParams, DegreeDistribution, Model, RankDistribution,
};
use bats_flan::opt::{self, OptConfig};
use bats_flan::poisson;
use bats_flan::sim::{self, BatchCount};

const RANKD: [f64; 17] = [
    0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0004, 0.0025, 0.0110, 0.0387, 0.1040, 0.2062, 0.2797, 0.2339,
    0.1038, 0.0190, 0.0008,
];

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let what = args.get(1).map(String::as_str).unwrap_or("all");

    let params = CodeParams::new(196, 16, 256, 8, false).unwrap();
    let h = RankDistribution::new(RANKD.to_vec(), true).unwrap();
    let solv = solvability_from_rank(&h, &params).unwrap();

    if what == "all" || what == "lp" {
        let t = Instant::now();
        let res = opt::optimize_asymptotic(&solv, &OptConfig::new(0.04)).unwrap();
        println!(
            "lp rankd grid512: {:?} theta={} grid={} violation={:e}",
            t.elapsed(),
            res.theta,
            res.grid_points,
            res.max_violation
        );
    }

    if what == "all" || what == "schedule" {
        let design = opt::optimize_asymptotic(&solv, &OptConfig::new(0.04)).unwrap();
        let k = 1600;
        let params = CodeParams::new(k, 16, 256, design.psi.max_degree().min(k), false).unwrap();
        let model = Model::new(
            params,
            RankDistribution::new(RANKD.to_vec(), true).unwrap(),
            design.psi.clone(),
        )
        .unwrap();
        let t = Instant::now();
        let sched = StepSchedule::new(&model);
        println!("schedule K=1600: {:?}", t.elapsed());
        let t = Instant::now();
        let mut acc = 0.0;
        for tt in 0..=k {
            let q = sched.transition(tt);
            acc += q.max_row_sum();
        }
        println!("transitions K=1600: {:?} (checksum {acc})", t.elapsed());
        let t = Instant::now();
        let dist = poisson::poisson_stopping_time(&model, 160.0, 1e-10).unwrap();
        println!(
            "poisson stopping K=1600: {:?} total={}",
            t.elapsed(),
            dist.total()
        );
        let t = Instant::now();
        let e = inact::expected_inactivations_poisson(&model, 160.0, 1e-10).unwrap();
        println!(
            "poisson inactivation K=1600: {:?} E={}",
            t.elapsed(),
            e.expected
        );
    }

    if what == "all" || what == "sim" {
        let params = CodeParams::new(32, 4, 16, 8, false).unwrap();
        let model = Model::new(
            params,
            RankDistribution::new(vec![0.01, 0.04, 0.10, 0.25, 0.60], true).unwrap(),
            DegreeDistribution::new(vec![0.05, 0.35, 0.20, 0.12, 0.10, 0.08, 0.05, 0.05], true)
                .unwrap(),
        )
        .unwrap();
        let t = Instant::now();
        let report = sim::monte_carlo(&model, BatchCount::Fixed(10), 10_000, 1, false).unwrap();
        println!(
            "sim 1e4 bp-only: {:?} mean={}",
            t.elapsed(),
            report.mean_stop_time()
        );
        let t = Instant::now();
        let report = sim::monte_carlo(&model, BatchCount::Fixed(10), 10_000, 1, true).unwrap();
        println!(
            "sim 1e4 with inactivation: {:?} mean_inact={:?}",
            t.elapsed(),
            report.mean_inactivations()
        );
    }

    if what == "all" || what == "desk" {
        let params = CodeParams::new(64, 4, 256, 8, false).unwrap();
        let h = RankDistribution::new(vec![0.005, 0.01, 0.05, 0.335, 0.6], true).unwrap();
        let solv = solvability_from_rank(&h, &params).unwrap();
        let t = Instant::now();
        let asym = opt::optimize_asymptotic(&solv, &OptConfig::new(0.04)).unwrap();
        println!("lp desk M=4: {:?} theta={}", t.elapsed(), asym.theta);
        let base = Model::new(
            CodeParams::new(64, 4, 256, 5, false).unwrap(),
            h.clone(),
            DegreeDistribution::new(vec![0.2; 5], true).unwrap(),
        )
        .unwrap();
        let t = Instant::now();
        let e = opt::evaluate_expected_inactivations(&base, &asym.psi, 18);
        println!("inact eval K=64 n=18: {:?} E={e}", t.elapsed());
    }
}
