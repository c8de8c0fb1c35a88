use pyo3::prelude::*;
use pyo3::types::PyDict;

use enertree_py::enertree;

#[test]
fn module_exposes_trees_models_and_formulas() {
    pyo3::append_to_inittab!(enertree);
    Python::initialize();
    Python::attach(|py| -> PyResult<()> {
        let m = py.import("enertree")?;
        let alpha: f64 = m.getattr("alpha")?.call1((0.5f64.atanh(),))?.extract()?;
        assert!((alpha - 1.05).abs() < 1e-12);

        let kwargs = PyDict::new(py);
        kwargs.set_item("seed", 1)?;
        kwargs.set_item("layers", 1)?;
        let trees = m.getattr("synthesize")?.call(("exact",), Some(&kwargs))?;
        assert_eq!(trees.len()?, 192);
        let first = trees.get_item(0)?;
        let violations: Vec<String> = first.call_method0("validate")?.extract()?;
        assert!(violations.is_empty());

        let bad = m.getattr("ModelTree")?.call_method1("from_json", ("{}",));
        assert!(bad.unwrap_err().is_instance_of::<pyo3::exceptions::PyValueError>(py));

        let report = m.getattr("evaluate")?.call1((trees, "predicted_sum"))?;
        let model_err: Option<f64> = report.get_item("average")?.get_item("model")?.extract()?;
        assert!(model_err.unwrap() < 1.0);
        Ok(())
    })
    .unwrap();
}
