//! Compiled graphs and the direct evaluator must agree on every program.

mod common;

use autograms::expr::Value;
use common::{check, session, CASES};

#[test]
fn corpus_agrees() {
    assert!(CASES.len() >= 20);
    for case in CASES {
        if let Err(e) = check(case) {
            panic!("{e}");
        }
    }
}

#[test]
fn compiled_fib_depth() {
    let src = CASES.iter().find(|c| c.name == "fib").unwrap().src;
    let mut s = session(src);
    for n in 2..=12i64 {
        s.apply_fn("fib", vec![Value::Int(n)]).unwrap();
        assert_eq!(s.peak_depth, n as usize - 1, "fib({n})");
    }
}
