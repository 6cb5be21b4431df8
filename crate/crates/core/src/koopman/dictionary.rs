//! Observable dictionaries for the lifting map, registered by name so that a
//! predictor file or experiment config can select one at runtime.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, OnceLock};

use nalgebra::DVector;

use crate::error::{Error, Result};

/// A family of observables `psi(x)`.
pub trait Dictionary: Send + Sync + fmt::Debug {
    /// Registry name, also written into predictor files.
    fn name(&self) -> &'static str;

    /// Lifted dimension for a state of dimension `n_x`.
    fn lifted_dim(&self, n_x: usize) -> usize;

    /// Whether the first `n_x` observables are the state itself.
    fn leads_with_state(&self) -> bool;

    /// Evaluate the observables; `out.len() == self.lifted_dim(x.len())`.
    fn lift_into(&self, x: &[f64], out: &mut [f64]);

    /// Floating-point operations spent by `lift_into`.
    fn lift_flops(&self, n_x: usize) -> u64;
}

/// `[x; 1; x .* shift(x); x .* x]`, where `shift` rotates the last component
/// to the front so entry `i` of the product pairs `x_i` with `x_{i-1}`
/// (indices mod `n_x`). Lifted dimension `3 n_x + 1`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ShiftedQuadratic;

impl Dictionary for ShiftedQuadratic {
    fn name(&self) -> &'static str {
        "shifted-quadratic"
    }

    fn lifted_dim(&self, n_x: usize) -> usize {
        3 * n_x + 1
    }

    fn leads_with_state(&self) -> bool {
        true
    }

    fn lift_into(&self, x: &[f64], out: &mut [f64]) {
        let n = x.len();
        out[..n].copy_from_slice(x);
        out[n] = 1.0;
        for i in 0..n {
            let prev = x[(i + n - 1) % n];
            out[n + 1 + i] = x[i] * prev;
            out[2 * n + 1 + i] = x[i] * x[i];
        }
    }

    fn lift_flops(&self, n_x: usize) -> u64 {
        2 * n_x as u64
    }
}

/// `[x; 1]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct StateConstant;

impl Dictionary for StateConstant {
    fn name(&self) -> &'static str {
        "state-constant"
    }

    fn lifted_dim(&self, n_x: usize) -> usize {
        n_x + 1
    }

    fn leads_with_state(&self) -> bool {
        true
    }

    fn lift_into(&self, x: &[f64], out: &mut [f64]) {
        out[..x.len()].copy_from_slice(x);
        out[x.len()] = 1.0;
    }

    fn lift_flops(&self, _n_x: usize) -> u64 {
        0
    }
}

/// `x` itself (plain DMD with inputs).
#[derive(Debug, Clone, Copy, Default)]
pub struct StateOnly;

impl Dictionary for StateOnly {
    fn name(&self) -> &'static str {
        "state"
    }

    fn lifted_dim(&self, n_x: usize) -> usize {
        n_x
    }

    fn leads_with_state(&self) -> bool {
        true
    }

    fn lift_into(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
    }

    fn lift_flops(&self, _n_x: usize) -> u64 {
        0
    }
}

/// The single observable `1`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConstantOnly;

impl Dictionary for ConstantOnly {
    fn name(&self) -> &'static str {
        "constant"
    }

    fn lifted_dim(&self, _n_x: usize) -> usize {
        1
    }

    fn leads_with_state(&self) -> bool {
        false
    }

    fn lift_into(&self, _x: &[f64], out: &mut [f64]) {
        out[0] = 1.0;
    }

    fn lift_flops(&self, _n_x: usize) -> u64 {
        0
    }
}

type Factory = fn() -> Arc<dyn Dictionary>;

/// Name-to-constructor table of available dictionaries.
#[derive(Debug, Clone, Default)]
pub struct DictionaryRegistry {
    entries: BTreeMap<&'static str, Factory>,
}

impl DictionaryRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register("shifted-quadratic", || Arc::new(ShiftedQuadratic));
        r.register("state-constant", || Arc::new(StateConstant));
        r.register("state", || Arc::new(StateOnly));
        r.register("constant", || Arc::new(ConstantOnly));
        r
    }

    /// Returns the previous factory under `name`, if any.
    pub fn register(&mut self, name: &'static str, factory: Factory) -> Option<Factory> {
        self.entries.insert(name, factory)
    }

    pub fn create(&self, name: &str) -> Result<Arc<dyn Dictionary>> {
        self.entries.get(name).map(|f| f()).ok_or_else(|| {
            Error::Config(format!(
                "unknown observable dictionary {name:?}; known: {}",
                self.names().collect::<Vec<_>>().join(", ")
            ))
        })
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.keys().copied()
    }
}

/// Process-wide registry of the built-in dictionaries.
pub fn builtin_registry() -> &'static DictionaryRegistry {
    static REGISTRY: OnceLock<DictionaryRegistry> = OnceLock::new();
    REGISTRY.get_or_init(DictionaryRegistry::with_builtins)
}

/// A dictionary bound to a state dimension.
#[derive(Clone)]
pub struct ObservableMap {
    n_x: usize,
    dictionary: Arc<dyn Dictionary>,
}

impl fmt::Debug for ObservableMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ObservableMap")
            .field("kind", &self.dictionary.name())
            .field("n_x", &self.n_x)
            .field("n_psi", &self.lifted_dim())
            .finish()
    }
}

impl PartialEq for ObservableMap {
    fn eq(&self, other: &Self) -> bool {
        self.n_x == other.n_x && self.kind() == other.kind()
    }
}

impl ObservableMap {
    pub fn new(n_x: usize, dictionary: Arc<dyn Dictionary>) -> Result<Self> {
        if n_x == 0 {
            return Err(Error::InvalidInput("state dimension must be >= 1".into()));
        }
        Ok(Self { n_x, dictionary })
    }

    /// Look up `kind` in the built-in registry.
    pub fn from_name(kind: &str, n_x: usize) -> Result<Self> {
        Self::new(n_x, builtin_registry().create(kind)?)
    }

    /// The dictionary used in the KdV case study.
    pub fn shifted_quadratic(n_x: usize) -> Result<Self> {
        Self::new(n_x, Arc::new(ShiftedQuadratic))
    }

    pub fn kind(&self) -> &'static str {
        self.dictionary.name()
    }

    pub fn state_dim(&self) -> usize {
        self.n_x
    }

    pub fn lifted_dim(&self) -> usize {
        self.dictionary.lifted_dim(self.n_x)
    }

    pub fn leads_with_state(&self) -> bool {
        self.dictionary.leads_with_state()
    }

    pub fn lift_flops(&self) -> u64 {
        self.dictionary.lift_flops(self.n_x)
    }

    pub fn lift(&self, x: &[f64]) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(self.lifted_dim());
        self.lift_into(x, out.as_mut_slice())?;
        Ok(out)
    }

    pub fn lift_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.n_x {
            return Err(Error::dim(format!("lift: expected state of length {}, got {}", self.n_x, x.len())));
        }
        if out.len() != self.lifted_dim() {
            return Err(Error::dim(format!(
                "lift: output buffer has length {}, need {}",
                out.len(),
                self.lifted_dim()
            )));
        }
        self.dictionary.lift_into(x, out);
        Ok(())
    }
}
