//! Persistent model parameters, shared with tapes by reference.

use std::cell::RefCell;
use std::rc::Rc;

use rand::Rng;

/// One named parameter tensor with its accumulated gradient.
pub struct ParamData {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    pub grad: Vec<f64>,
}

pub type ParamRef = Rc<RefCell<ParamData>>;

/// Ordered collection of parameters; ordering is stable and defines the
/// layout of optimizer state and checkpoints.
#[derive(Default)]
pub struct ParamSet {
    params: Vec<ParamRef>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: &str, shape: &[usize], values: Vec<f64>) -> ParamRef {
        assert_eq!(values.len(), shape.iter().product::<usize>(), "param {name}: size mismatch");
        assert!(
            !self.params.iter().any(|p| p.borrow().name == name),
            "duplicate parameter name {name}"
        );
        let n = values.len();
        let p = Rc::new(RefCell::new(ParamData {
            name: name.to_string(),
            shape: shape.to_vec(),
            values,
            grad: vec![0.0; n],
        }));
        self.params.push(p.clone());
        p
    }

    /// Uniform init in ±1/√fan_in.
    pub fn register_init(&mut self, name: &str, shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> ParamRef {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let n: usize = shape.iter().product();
        let values = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
        self.register(name, shape, values)
    }

    pub fn register_zeros(&mut self, name: &str, shape: &[usize]) -> ParamRef {
        let n: usize = shape.iter().product();
        self.register(name, shape, vec![0.0; n])
    }

    pub fn iter(&self) -> impl Iterator<Item = &ParamRef> {
        self.params.iter()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.borrow().values.len()).sum()
    }

    pub fn zero_grads(&self) {
        for p in &self.params {
            p.borrow_mut().grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn get(&self, name: &str) -> Option<ParamRef> {
        self.params.iter().find(|p| p.borrow().name == name).cloned()
    }
}
