use pyo3::prelude::*;
use pyo3::types::PyDict;

#[test]
fn module_solves_and_simulates_from_python() {
    use mfgsim::mfgsim;
    pyo3::append_to_inittab!(mfgsim);
    Python::initialize();
    Python::attach(|py| {
        let locals = PyDict::new(py);
        py.run(
            cr#"
import mfgsim
cfg = mfgsim.Config.model_a()
cfg.agents = 20
cfg.horizon = 50
eq = mfgsim.solve(cfg)
k = eq.gains()[0]["K"][0][0]
m = mfgsim.run_game(cfg, eq, 1)
p = mfgsim.probe(cfg, eq, 2, "equilibrium", "zero_control")
try:
    mfgsim.probe(cfg, eq, 2, "bogus", "zero_control")
    bad = False
except ValueError:
    bad = True
"#,
            None,
            Some(&locals),
        )
        .unwrap();
        let k: f64 = locals.get_item("k").unwrap().unwrap().extract().unwrap();
        assert!((k - 0.128459).abs() < 1e-6);
        let p = locals.get_item("p").unwrap().unwrap();
        assert!(p.get_item("pass").unwrap().extract::<bool>().unwrap());
        assert!(locals.get_item("bad").unwrap().unwrap().extract::<bool>().unwrap());
    });
}
