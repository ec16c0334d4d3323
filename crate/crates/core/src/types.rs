//! Entity types, argument slots and two-argument propositions.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

/// Placeholder marking the X argument inside a template.
pub const X_PLACEHOLDER: &str = "{X}";
/// Placeholder marking the Y argument inside a template.
pub const Y_PLACEHOLDER: &str = "{Y}";

/// Type assigned when a real type could not be resolved.
pub const FALLBACK_TYPE: &str = "thing";

/// Shipped type inventory: 48 content types followed by the fallback.
pub const DEFAULT_TYPE_NAMES: [&str; 49] = [
    "person",
    "organization",
    "location",
    "product",
    "art",
    "event",
    "building",
    "food",
    "medicine",
    "disease",
    "language",
    "religion",
    "government",
    "law",
    "military",
    "award",
    "biology",
    "body_part",
    "broadcast",
    "chemistry",
    "computer",
    "education",
    "finance",
    "game",
    "geography",
    "internet",
    "living_thing",
    "music",
    "news_agency",
    "park",
    "people",
    "play",
    "rail",
    "software",
    "sports_team",
    "title",
    "transportation",
    "visual_art",
    "written_work",
    "film",
    "astral_body",
    "time",
    "metropolitan_transit",
    "god",
    "educational_degree",
    "currency",
    "airline",
    "company",
    FALLBACK_TYPE,
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TypeError {
    InvalidName(String),
    EmptySurface,
    SurfaceHasControl(String),
    Template { template: String, reason: &'static str },
}

impl fmt::Display for TypeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeError::InvalidName(n) => {
                write!(f, "entity type name {n:?} is not a lowercase ASCII token")
            }
            TypeError::EmptySurface => f.write_str("argument surface is empty"),
            TypeError::SurfaceHasControl(s) => {
                write!(f, "argument surface {s:?} contains a tab or newline")
            }
            TypeError::Template { template, reason } => {
                write!(f, "template {template:?}: {reason}")
            }
        }
    }
}

/// A lowercase entity type name such as `location` or `food`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct EntityType(String);

impl EntityType {
    pub fn new(name: &str) -> Result<Self, TypeError> {
        let ok = !name.is_empty()
            && name
                .bytes()
                .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_');
        if ok {
            Ok(EntityType(name.to_string()))
        } else {
            Err(TypeError::InvalidName(name.to_string()))
        }
    }

    pub fn fallback() -> Self {
        EntityType(FALLBACK_TYPE.to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_fallback(&self) -> bool {
        self.0 == FALLBACK_TYPE
    }
}

impl TryFrom<String> for EntityType {
    type Error = TypeError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        EntityType::new(&value)
    }
}

impl From<EntityType> for String {
    fn from(value: EntityType) -> Self {
        value.0
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// The closed set of type names accepted by datasets and entity indexes.
///
/// `thing` is always a member. Names outside the set resolve to `thing`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeSet {
    names: BTreeSet<String>,
}

impl Default for TypeSet {
    fn default() -> Self {
        TypeSet {
            names: DEFAULT_TYPE_NAMES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl TypeSet {
    pub fn from_names<'a, I: IntoIterator<Item = &'a str>>(names: I) -> Result<Self, TypeError> {
        let mut set = BTreeSet::new();
        for name in names {
            EntityType::new(name)?;
            set.insert(name.to_string());
        }
        set.insert(FALLBACK_TYPE.to_string());
        Ok(TypeSet { names: set })
    }

    /// Reads one type name per line; blank lines and `#` comments are ignored.
    pub fn parse_config(text: &str) -> Result<Self, TypeError> {
        Self::from_names(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn contains(&self, name: &str) -> bool {
        self.names.contains(name)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    /// Resolves a raw name. The flag is true when the name fell back to `thing`.
    pub fn resolve(&self, raw: &str) -> (EntityType, bool) {
        let name = raw.trim();
        if self.names.contains(name) {
            (EntityType(name.to_string()), false)
        } else {
            (EntityType::fallback(), true)
        }
    }
}

/// Argument slot marker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Slot {
    X,
    Y,
}

impl Slot {
    pub fn as_str(self) -> &'static str {
        match self {
            Slot::X => "X",
            Slot::Y => "Y",
        }
    }

    pub fn placeholder(self) -> &'static str {
        match self {
            Slot::X => X_PLACEHOLDER,
            Slot::Y => Y_PLACEHOLDER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArgumentSlot {
    surface: String,
    etype: EntityType,
    slot: Slot,
}

impl ArgumentSlot {
    pub fn new(surface: &str, etype: EntityType, slot: Slot) -> Result<Self, TypeError> {
        let surface = surface.trim();
        if surface.is_empty() {
            return Err(TypeError::EmptySurface);
        }
        if surface.contains(['\t', '\n', '\r']) {
            return Err(TypeError::SurfaceHasControl(surface.to_string()));
        }
        Ok(ArgumentSlot {
            surface: surface.to_string(),
            etype,
            slot,
        })
    }

    pub fn surface(&self) -> &str {
        &self.surface
    }

    pub fn etype(&self) -> &EntityType {
        &self.etype
    }

    pub fn slot(&self) -> Slot {
        self.slot
    }

    pub(crate) fn with_surface(&self, surface: &str) -> Result<Self, TypeError> {
        ArgumentSlot::new(surface, self.etype.clone(), self.slot)
    }
}

/// Checks that `template` holds each placeholder exactly once.
pub fn validate_template(template: &str) -> Result<(), TypeError> {
    let err = |reason| TypeError::Template {
        template: template.to_string(),
        reason,
    };
    if template.contains(['\t', '\n', '\r']) {
        return Err(err("contains a tab or newline"));
    }
    match template.matches(X_PLACEHOLDER).count() {
        0 => return Err(err("missing {X} placeholder")),
        1 => {}
        _ => return Err(err("{X} placeholder appears more than once")),
    }
    match template.matches(Y_PLACEHOLDER).count() {
        0 => Err(err("missing {Y} placeholder")),
        1 => Ok(()),
        _ => Err(err("{Y} placeholder appears more than once")),
    }
}

/// One predicate with two typed arguments, e.g. `{X} exports tons of {Y}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Proposition {
    template: String,
    arg_x: ArgumentSlot,
    arg_y: ArgumentSlot,
    lemma_hint: Option<String>,
}

impl Proposition {
    pub fn new(
        template: &str,
        x_surface: &str,
        x_type: EntityType,
        y_surface: &str,
        y_type: EntityType,
    ) -> Result<Self, TypeError> {
        validate_template(template)?;
        Ok(Proposition {
            template: template.to_string(),
            arg_x: ArgumentSlot::new(x_surface, x_type, Slot::X)?,
            arg_y: ArgumentSlot::new(y_surface, y_type, Slot::Y)?,
            lemma_hint: None,
        })
    }

    pub fn with_lemma_hint(mut self, hint: Option<&str>) -> Self {
        self.lemma_hint = hint
            .map(str::trim)
            .filter(|h| !h.is_empty())
            .map(|h| h.to_string());
        self
    }

    pub fn template(&self) -> &str {
        &self.template
    }

    pub fn arg(&self, slot: Slot) -> &ArgumentSlot {
        match slot {
            Slot::X => &self.arg_x,
            Slot::Y => &self.arg_y,
        }
    }

    pub fn arg_x(&self) -> &ArgumentSlot {
        &self.arg_x
    }

    pub fn arg_y(&self) -> &ArgumentSlot {
        &self.arg_y
    }

    pub fn lemma_hint(&self) -> Option<&str> {
        self.lemma_hint.as_deref()
    }

    pub fn signature(&self) -> (EntityType, EntityType) {
        (self.arg_x.etype.clone(), self.arg_y.etype.clone())
    }

    /// Same arguments, different template.
    pub fn with_template(&self, template: &str, hint: Option<&str>) -> Result<Self, TypeError> {
        validate_template(template)?;
        Ok(Proposition {
            template: template.to_string(),
            arg_x: self.arg_x.clone(),
            arg_y: self.arg_y.clone(),
            lemma_hint: None,
        }
        .with_lemma_hint(hint))
    }

    /// Same template, new argument surfaces (types are kept).
    pub fn with_surfaces(&self, x_surface: &str, y_surface: &str) -> Result<Self, TypeError> {
        Ok(Proposition {
            template: self.template.clone(),
            arg_x: self.arg_x.with_surface(x_surface)?,
            arg_y: self.arg_y.with_surface(y_surface)?,
            lemma_hint: self.lemma_hint.clone(),
        })
    }

    /// Substitutes argument surfaces into the template in a single pass, so
    /// surfaces that happen to contain placeholder text are left alone.
    pub fn render(&self) -> String {
        render_template(&self.template, &self.arg_x.surface, &self.arg_y.surface)
    }

    /// The template with both placeholders removed, collapsed to single spaces.
    pub fn predicate_text(&self) -> String {
        let mut out = String::new();
        for tok in self
            .template
            .replace(X_PLACEHOLDER, " ")
            .replace(Y_PLACEHOLDER, " ")
            .split_whitespace()
        {
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(tok);
        }
        out
    }
}

pub(crate) fn render_template(template: &str, x: &str, y: &str) -> String {
    let mut out = String::with_capacity(template.len() + x.len() + y.len());
    let mut rest = template;
    loop {
        let next_x = rest.find(X_PLACEHOLDER);
        let next_y = rest.find(Y_PLACEHOLDER);
        let (pos, value) = match (next_x, next_y) {
            (Some(a), Some(b)) if a < b => (a, x),
            (Some(_), Some(b)) => (b, y),
            (Some(a), None) => (a, x),
            (None, Some(b)) => (b, y),
            (None, None) => break,
        };
        out.push_str(&rest[..pos]);
        out.push_str(value);
        rest = &rest[pos + X_PLACEHOLDER.len()..];
    }
    out.push_str(rest);
    out
}

/// Tokens of the rendered text that come from the template rather than the arguments.
pub fn template_tokens(template: &str) -> Vec<&str> {
    template
        .split(|c: char| c.is_whitespace())
        .filter(|t| !t.is_empty() && *t != X_PLACEHOLDER && *t != Y_PLACEHOLDER)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ty(n: &str) -> EntityType {
        EntityType::new(n).unwrap()
    }

    #[test]
    fn default_type_set_has_49_names_with_thing() {
        let set = TypeSet::default();
        assert_eq!(set.len(), 49);
        assert!(set.contains("thing"));
        assert!(set.contains("medicine"));
    }

    #[test]
    fn config_always_adds_fallback() {
        let set = TypeSet::parse_config("# types\nperson\n\nlocation\n").unwrap();
        assert_eq!(set.len(), 3);
        assert_eq!(set.resolve("food"), (EntityType::fallback(), true));
        assert_eq!(set.resolve("person"), (ty("person"), false));
    }

    #[test]
    fn type_names_must_be_lowercase_tokens() {
        assert!(EntityType::new("Person").is_err());
        assert!(EntityType::new("").is_err());
        assert!(EntityType::new("body part").is_err());
        assert!(EntityType::new("body_part").is_ok());
    }

    #[test]
    fn render_exports_example() {
        let p = Proposition::new(
            "{X} exports tons of {Y}",
            "India",
            ty("location"),
            "rice",
            ty("food"),
        )
        .unwrap();
        assert_eq!(p.render(), "India exports tons of rice");
    }

    #[test]
    fn identical_surfaces_are_permitted() {
        let p = Proposition::new("{X} R {Y}", "a", ty("thing"), "a", ty("thing")).unwrap();
        assert_eq!(p.render(), "a R a");
    }

    #[test]
    fn render_does_not_rescan_substituted_text() {
        let p = Proposition::new("{Y} then {X}", "{Y}", ty("thing"), "b", ty("thing")).unwrap();
        assert_eq!(p.render(), "b then {Y}");
    }

    #[test]
    fn template_placeholder_rules() {
        assert!(validate_template("{X} likes {Y}").is_ok());
        assert!(validate_template("{X} likes").is_err());
        assert!(validate_template("{X} likes {X} {Y}").is_err());
        assert!(validate_template("{X}\tlikes {Y}").is_err());
    }

    #[test]
    fn blank_surface_rejected() {
        assert_eq!(
            Proposition::new("{X} r {Y}", "  ", ty("thing"), "b", ty("thing")).unwrap_err(),
            TypeError::EmptySurface
        );
    }

    #[test]
    fn predicate_text_drops_placeholders() {
        let p = Proposition::new(
            "{X} was the Governor of {Y}",
            "George Bush",
            ty("person"),
            "Texas",
            ty("location"),
        )
        .unwrap();
        assert_eq!(p.predicate_text(), "was the Governor of");
    }
}
