use beaconfp::beaconfp;
use pyo3::prelude::*;

#[test]
fn module_runs_in_embedded_interpreter() {
    pyo3::append_to_inittab!(beaconfp);
    Python::initialize();
    Python::attach(|py| {
        let code = c"
import beaconfp
assert beaconfp.SIGMA_GRID[0] == 1.0
assert beaconfp.similarity('kernel', [-60.0, -70.0], [-60.0, -70.0], sigma=4.0) == 1.0
try:
    beaconfp.similarity('nope', [1.0], [1.0])
    raise AssertionError('accepted unknown metric')
except ValueError:
    pass
";
        py.run(code, None, None).unwrap();
    });
}
