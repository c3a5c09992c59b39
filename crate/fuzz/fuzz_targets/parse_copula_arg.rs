#![no_main]

use copula_ot_cli::CopulaArg;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((&shape, rest)) = data.split_first() else {
        return;
    };
    let Ok(text) = std::str::from_utf8(rest) else {
        return;
    };
    let Ok(arg) = text.parse::<CopulaArg>() else {
        return;
    };
    assert_eq!(arg.to_string().parse::<CopulaArg>().unwrap(), arg);
    let (n, k) = (1 + (shape & 3) as usize, 1 + (shape >> 2 & 7) as usize);
    if let Some(Ok(copula)) = arg.builtin(n, k) {
        assert_eq!(copula.dim(), n);
    }
});
