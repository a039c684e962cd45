use maepose_tensor::oracle::{all_cases, check};

const SEEDS: u64 = 10;
const MAX_REL_ERR: f64 = 1e-3;

#[test]
fn every_op_matches_finite_differences() {
    let mut failures = Vec::new();
    for case in all_cases() {
        for seed in 0..SEEDS {
            let report = check(&case, 1000 + seed).unwrap();
            if report.max_rel_err >= MAX_REL_ERR || report.forward_err > 1e-4 {
                failures.push(format!("{} seed {seed}: {report:?}", case.name));
            }
        }
    }
    assert!(failures.is_empty(), "gradient check failures:\n{}", failures.join("\n"));
}

#[test]
fn matmul_three_by_four_times_four_by_two() {
    let case = all_cases().into_iter().find(|c| c.name == "matmul").unwrap();
    assert_eq!(case.input_shapes, vec![vec![3, 4], vec![4, 2]]);
    for seed in 0..SEEDS {
        assert!(check(&case, seed).unwrap().max_rel_err < MAX_REL_ERR);
    }
}
