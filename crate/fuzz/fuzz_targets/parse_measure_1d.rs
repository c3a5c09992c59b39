#![no_main]

use copula_ot::DiscreteMeasure1D;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    let Ok(m) = DiscreteMeasure1D::from_json_str(data) else {
        return;
    };
    assert!(m.atoms().windows(2).all(|w| w[0] < w[1]));
    for u in [1e-12, 0.25, 0.5, 1.0] {
        let x = m.quantile(u).unwrap();
        assert!(m.cdf(x).unwrap() >= u - 1e-12);
    }
    let back = DiscreteMeasure1D::from_json_str(&m.to_json_string()).unwrap();
    assert_eq!(back.atoms(), m.atoms());
});
