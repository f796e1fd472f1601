use std::collections::HashMap;

use super::{ActionTemplate, DialogState, EntityStore, TemplateCatalog};
use crate::error::{bail, Result};
use crate::numcore::Scalar;

pub type ApiCallback<F> = Box<dyn Fn(&EntityStore) -> Vec<F> + Send + Sync>;

/// Developer callbacks for API action templates, keyed by template id.
pub struct ApiRegistry<F> {
    callbacks: HashMap<usize, ApiCallback<F>>,
}

impl<F: Scalar> Default for ApiRegistry<F> {
    fn default() -> Self {
        Self { callbacks: HashMap::new() }
    }
}

impl<F: Scalar> ApiRegistry<F> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a callback returning no features for every API template.
    pub fn with_stubs(catalog: &TemplateCatalog) -> Self {
        let mut r = Self::new();
        for t in catalog.iter().filter(|t| t.is_api) {
            r.register(t.id, Box::new(|_| Vec::new()));
        }
        r
    }

    pub fn register(&mut self, template_id: usize, callback: ApiCallback<F>) {
        self.callbacks.insert(template_id, callback);
    }
}

/// Invokes the callback of an API template and stores its features for the
/// next turn. Text templates leave the state untouched.
pub fn api_dispatch<F: Scalar>(
    template: &ActionTemplate,
    state: &mut DialogState<F>,
    registry: &ApiRegistry<F>,
    api_dim: usize,
) -> Result<()> {
    if !template.is_api {
        return Ok(());
    }
    let Some(cb) = registry.callbacks.get(&template.id) else {
        bail!(Config, "no API callback registered for template {} ({:?})", template.id, template.text);
    };
    let features = cb(&state.entities);
    if features.len() != api_dim {
        bail!(Config, "API callback for template {} returned {} features, model expects {api_dim}", template.id, features.len());
    }
    state.api_features = features;
    Ok(())
}
