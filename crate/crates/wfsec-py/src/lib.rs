//! Python bindings for the `wfsec` analyzer.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use wfsec::{
    check_well_protected, generalized_message_space, interpret, normalize, parse_message, select, Atom,
    FunctionName, Message, RoleMode, SelectionResult, Verdict,
};

fn err(e: wfsec::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn function(name: &str) -> PyResult<FunctionName> {
    name.parse().map_err(PyValueError::new_err)
}

fn role_mode(mode: Option<&str>) -> PyResult<RoleMode> {
    match mode {
        None | Some("default") => Ok(RoleMode::Default),
        Some("auto") => Ok(RoleMode::Auto),
        Some("manual") => Ok(RoleMode::Manual),
        Some(other) => Err(PyValueError::new_err(format!(
            "unknown role mode `{other}` (expected default, auto or manual)"
        ))),
    }
}

/// A parsed protocol with its verification context.
#[pyclass(name = "Protocol", module = "wfsec_py")]
struct PyProtocol {
    inner: wfsec::Protocol,
}

impl PyProtocol {
    fn message(&self, text: &str) -> PyResult<Message> {
        parse_message(text, &self.inner.symbols).map_err(err)
    }

    fn atom(&self, text: &str) -> PyResult<Atom> {
        match self.message(text)? {
            Message::Atom(a) => Ok(a),
            other => Err(PyValueError::new_err(format!("`{other}` is not an atom"))),
        }
    }
}

#[pymethods]
impl PyProtocol {
    /// Parses a protocol script.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(PyProtocol {
            inner: wfsec::parse_protocol(text).map_err(err)?,
        })
    }

    /// Reads and parses a protocol file.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PyValueError::new_err(format!("cannot read `{path}`: {e}")))?;
        Self::parse(&text)
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    /// Generalized roles, rendered as text.
    #[pyo3(signature = (mode = None))]
    fn roles(&self, mode: Option<&str>) -> PyResult<Vec<String>> {
        let roles = self.inner.roles(role_mode(mode)?).map_err(err)?;
        Ok(roles.iter().map(|r| r.to_string()).collect())
    }

    /// Encryption patterns of the generalized message space.
    #[pyo3(signature = (mode = None))]
    fn message_space(&self, mode: Option<&str>) -> PyResult<Vec<String>> {
        let roles = self.inner.roles(role_mode(mode)?).map_err(err)?;
        Ok(generalized_message_space(&self.inner, &roles)
            .iter()
            .map(|m| m.to_string())
            .collect())
    }

    /// Checks the growth criterion with `function` (`fmax`, `fek` or `fn`).
    #[pyo3(signature = (function = "fmax", mode = None))]
    fn analyze(&self, function: &str, mode: Option<&str>) -> PyResult<PyReport> {
        let f = self::function(function)?;
        let inner = wfsec::analyze(&self.inner, &f.instance(), role_mode(mode)?).map_err(err)?;
        Ok(PyReport { inner })
    }

    /// Normal form of a message under the protocol's rewrite rules.
    fn normalize(&self, message: &str) -> PyResult<String> {
        let m = self.message(message)?;
        Ok(normalize(&m, &self.inner.context).map_err(err)?.to_string())
    }

    /// True when every listed message is well-protected.
    fn is_well_protected(&self, messages: Vec<String>) -> PyResult<bool> {
        let msgs = messages.iter().map(|m| self.message(m)).collect::<PyResult<Vec<_>>>()?;
        Ok(check_well_protected(&msgs, &self.inner.context)
            .map_err(err)?
            .is_well_protected())
    }

    /// Selected atoms of `atom` in `message`; `None` stands for every atom.
    #[pyo3(signature = (atom, message, function = "fmax"))]
    fn select(&self, atom: &str, message: &str, function: &str) -> PyResult<Option<Vec<String>>> {
        let inst = self::function(function)?.instance();
        let r = select(&inst, &self.atom(atom)?, &self.message(message)?, &self.inner.context).map_err(err)?;
        Ok(match r {
            SelectionResult::AllAtoms => None,
            SelectionResult::Finite(s) => Some(s.iter().map(|a| a.to_string()).collect()),
        })
    }

    /// Security level `F(atom, message)` rendered as text.
    #[pyo3(signature = (atom, message, function = "fmax"))]
    fn interpret(&self, atom: &str, message: &str, function: &str) -> PyResult<String> {
        let f = self::function(function)?;
        let l = interpret(f, &self.atom(atom)?, &self.message(message)?, &self.inner.context).map_err(err)?;
        Ok(l.to_string())
    }

    fn __repr__(&self) -> String {
        format!("Protocol({:?}, steps={})", self.inner.name, self.inner.steps.len())
    }
}

/// Result of an analysis run.
#[pyclass(name = "Report", module = "wfsec_py")]
struct PyReport {
    inner: wfsec::AnalysisReport,
}

#[pymethods]
impl PyReport {
    /// True when every row meets the criterion.
    #[getter]
    fn fulfilled(&self) -> bool {
        self.inner.verdict() == Verdict::Fulfilled
    }

    /// Rows as dictionaries of strings.
    fn rows(&self, py: Python<'_>) -> PyResult<Vec<PyObject>> {
        self.inner
            .rows
            .iter()
            .map(|r| {
                let d = pyo3::types::PyDict::new_bound(py);
                d.set_item("role", &r.role)?;
                d.set_item("atom", r.atom.to_string())?;
                d.set_item("sent", r.sent.to_string())?;
                d.set_item("lower_bound", r.lower_bound.to_string())?;
                d.set_item("reception_estimate", r.reception_estimate.to_string())?;
                d.set_item("verdict", r.verdict.to_string())?;
                d.set_item("blame", r.blame.iter().map(|a| a.to_string()).collect::<Vec<_>>())?;
                Ok(d.into_any().unbind())
            })
            .collect()
    }

    fn table(&self) -> String {
        self.inner.render_table()
    }

    fn json_lines(&self) -> String {
        self.inner.render_json_lines()
    }

    fn __len__(&self) -> usize {
        self.inner.rows.len()
    }
}

/// Runs the command-line interface with `args` and returns
/// `(exit_code, stdout, stderr)`.
#[pyfunction]
fn run_cli(args: Vec<String>) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut errs = Vec::new();
    let argv = std::iter::once("wfsec".to_string()).chain(args);
    let code = wfsec::cli::run(argv, &mut out, &mut errs);
    (
        code,
        String::from_utf8_lossy(&out).into_owned(),
        String::from_utf8_lossy(&errs).into_owned(),
    )
}

#[pymodule]
fn wfsec_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProtocol>()?;
    m.add_class::<PyReport>()?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
