//! Interfaces over a grammar: views render starting rules, interactions
//! bind choice variables through mappings.

mod check;
mod factor;
mod synth;

pub use check::{check_valid, covers, mapping_targets, SpecProblem, ValidityReport};
pub use factor::factor_rewrite;
pub use synth::{
    synthesize, synthesize_default, RecursionStrategy, SynthError, SynthOptions, MAX_DROPDOWN_OPTIONS,
    MAX_RADIO_OPTIONS,
};

use serde::{Deserialize, Serialize};

use crate::value::Value;

/// Version of the serialized spec format.
pub const SPEC_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WidgetType {
    Dropdown,
    Radio,
    Slider,
    RangeSlider,
    TextInput,
    Checkbox,
    ButtonAddInstance,
    DatePicker,
}

impl WidgetType {
    pub fn as_str(self) -> &'static str {
        match self {
            WidgetType::Dropdown => "dropdown",
            WidgetType::Radio => "radio",
            WidgetType::Slider => "slider",
            WidgetType::RangeSlider => "range-slider",
            WidgetType::TextInput => "text-input",
            WidgetType::Checkbox => "checkbox",
            WidgetType::ButtonAddInstance => "button-add-instance",
            WidgetType::DatePicker => "date-picker",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViewType {
    Table,
    BarChart,
    LineChart,
    Text,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionItem {
    pub value: Value,
    pub label: String,
}

/// Values one attribute of an interaction can take.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AttrDomain {
    /// Explicit list.
    Options { options: Vec<OptionItem> },
    /// Closed interval; either end may be open.
    Range {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lo: Option<Value>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        hi: Option<Value>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        step: Option<Value>,
    },
    /// Rows of a query, listed from the database when the spec was built.
    Query { query: String, options: Vec<Value> },
    /// Free text, parsed against the mapped term.
    Text,
    /// Number of instances, `0..=max` (unbounded when absent).
    Count {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max: Option<u32>,
    },
    Boolean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub domain: AttrDomain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionDecl {
    pub id: String,
    pub widget_type: WidgetType,
    pub label: String,
    pub domain: Vec<Attribute>,
}

impl InteractionDecl {
    pub fn attribute(&self, name: &str) -> Option<&Attribute> {
        self.domain.iter().find(|a| a.name == name)
    }
}

/// Connects an interaction to one target: a choice variable (or template),
/// or for text inputs any term. `attributes` maps interaction attributes to
/// attributes of the target's domain (a choice variable has the single
/// attribute `value`, a term has `text`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingDecl {
    pub interaction_id: String,
    pub target: String,
    pub attributes: indexmap::IndexMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewDecl {
    pub id: String,
    pub starting_rule: String,
    pub view_type: ViewType,
    /// View of the unfiltered background series drawn under this one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    /// Interactions in display order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub order: Vec<String>,
    /// The spec targets the grammar unrolled to this depth.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unrolled_depth: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterfaceSpec {
    pub version: u32,
    pub views: Vec<ViewDecl>,
    pub interactions: Vec<InteractionDecl>,
    pub mappings: Vec<MappingDecl>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<Layout>,
}

impl InterfaceSpec {
    pub fn new() -> Self {
        InterfaceSpec {
            version: SPEC_VERSION,
            views: Vec::new(),
            interactions: Vec::new(),
            mappings: Vec::new(),
            layout: None,
        }
    }

    pub fn interaction(&self, id: &str) -> Option<&InteractionDecl> {
        self.interactions.iter().find(|i| i.id == id)
    }

    pub fn mappings_of<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a MappingDecl> + 'a {
        self.mappings.iter().filter(move |m| m.interaction_id == id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn widget_count(&self, ty: WidgetType) -> usize {
        self.interactions.iter().filter(|i| i.widget_type == ty).count()
    }
}

impl Default for InterfaceSpec {
    fn default() -> Self {
        Self::new()
    }
}
