//! Choice variables, their qualified names and domains, equality classes and
//! the dependency relation between them.

mod grammar;
mod model;
mod name;

pub use grammar::{Grammar, Node, NodeId, NodeKind, Resolved, RuleId, RuleInfo, DEFAULT_STAR_CAP};
pub use model::{
    build_constraint_graph, class_key, extract_choice_variables, ChoiceModel, ChoiceVariable,
    ConstraintGraph, DomainDescriptor, RecursiveSite, ResolvedConstraint, VariableKind,
};
pub use name::{is_instance_segment, QualifiedName, INSTANCE_WILDCARD};
