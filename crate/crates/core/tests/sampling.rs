use actclass::ams::{sample_successor, solve_ams, AmsConfig};
use actclass::exact::{solve_exact, UnfoldOptions};
use actclass::model::BudgetSpec;
use actclass::models::medical::builtin_medical;
use actclass::{BeliefNode, Problem};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn medical(h: usize) -> Problem {
    let mut p = builtin_medical();
    p.budget = BudgetSpec::new(h, 10);
    p
}

#[test]
fn successor_draws_fit_one_step_probabilities() {
    let p = medical(1);
    let root = BeliefNode::root(&p.family);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let draws = 100_000;
    let mut stat = 0.0;
    let mut cells = 0;
    for (a, expected) in [[0.7, 0.3], [0.75, 0.25], [0.4, 0.6]].iter().enumerate() {
        let mut counts = [0u64; 2];
        for _ in 0..draws {
            let s = sample_successor(&p.family, &root, a, &mut rng);
            assert!(s.state < 2, "s3 is unreachable from s1");
            counts[s.state] += 1;
        }
        for (c, e) in counts.iter().zip(expected) {
            let e = e * draws as f64;
            stat += (*c as f64 - e).powi(2) / e;
            cells += 1;
        }
    }
    // One constraint per action.
    let dof = (cells - 3) as f64;
    let p_value = 1.0 - ChiSquared::new(dof).unwrap().cdf(stat);
    assert!(
        p_value > 0.001,
        "chi-square {stat} on {dof} dof, p = {p_value}"
    );
}

#[test]
fn sampled_root_action_on_one_step() {
    let p = medical(1);
    let root = BeliefNode::root(&p.family).key();
    let hits = (0..20)
        .filter(|&seed| {
            let sol = solve_ams(&p, &AmsConfig::uniform(2000, seed)).unwrap();
            sol.policy.action(0, &root) == Some(1)
        })
        .count();
    assert!(hits >= 19, "a2 chosen in {hits} of 20 runs");
}

#[test]
fn sampled_root_action_agrees_with_exact_on_two_steps() {
    let p = medical(2);
    let root = BeliefNode::root(&p.family).key();
    let exact = solve_exact(&p, UnfoldOptions::default())
        .unwrap()
        .policy
        .action(0, &root);
    let hits = (0..20)
        .filter(|&seed| {
            solve_ams(&p, &AmsConfig::uniform(2000, seed))
                .unwrap()
                .policy
                .action(0, &root)
                == exact
        })
        .count();
    assert!(hits >= 18, "agreement in {hits} of 20 runs");
}
