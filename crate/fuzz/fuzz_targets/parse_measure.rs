#![no_main]

use copula_ot::MultivariateMeasure;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    let Ok(m) = MultivariateMeasure::from_json_str(data) else {
        return;
    };
    let total: f64 = m.weights().iter().sum();
    assert!((total - 1.0).abs() <= 1e-9);
    assert!(m.atoms().iter().all(|x| x.len() == m.dim()));
    for marginal in m.marginals() {
        assert_eq!(*marginal.cumulative().last().unwrap(), 1.0);
    }
    // serialized output parses back to the same support
    let back = MultivariateMeasure::from_json_str(&m.to_json_string()).unwrap();
    assert_eq!(back.atoms(), m.atoms());
});
