//! Attribute schema of the synthetic pedestrian generator.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::config::KeyValues;
use crate::error::{Result, WpalError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttributeKind {
    /// Tied to an image region; ground-truth centres are recorded.
    Localizable,
    /// Changes appearance without a single location.
    Global,
}

/// Visual primitive used to plant an attribute.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Renderer {
    /// Small blob on top of the head.
    HeadBlob,
    /// Thin horizontal bar across the head.
    HeadBar,
    /// Blob beside the torso, left or right.
    SideBlob,
    /// Horizontal stripes over a patch of the legs.
    LegStripe,
    /// Two dots, one under each leg.
    FootDots,
    /// Torso clothing colour.
    TorsoColor,
    /// Darkened clothing over torso and legs.
    GlobalTint,
    /// Small mark at the neckline.
    RareMark,
}

impl Renderer {
    pub const ALL: [Renderer; 8] = [
        Renderer::HeadBlob,
        Renderer::HeadBar,
        Renderer::SideBlob,
        Renderer::LegStripe,
        Renderer::FootDots,
        Renderer::TorsoColor,
        Renderer::GlobalTint,
        Renderer::RareMark,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Renderer::HeadBlob => "head-blob",
            Renderer::HeadBar => "head-bar",
            Renderer::SideBlob => "side-blob",
            Renderer::LegStripe => "leg-stripe",
            Renderer::FootDots => "foot-dots",
            Renderer::TorsoColor => "torso-color",
            Renderer::GlobalTint => "global-tint",
            Renderer::RareMark => "rare-mark",
        }
    }

    pub fn kind(self) -> AttributeKind {
        match self {
            Renderer::TorsoColor | Renderer::GlobalTint => AttributeKind::Global,
            _ => AttributeKind::Localizable,
        }
    }

    /// Number of planted centres per positive sample.
    pub fn candidates(self) -> usize {
        match self {
            Renderer::FootDots => 2,
            _ => 1,
        }
    }

    /// Vertical extent of the primitive as a fraction of body height
    /// (0 for global renderers).
    pub fn extent(self) -> f64 {
        match self {
            Renderer::HeadBlob => 0.09,
            Renderer::HeadBar => 0.035,
            Renderer::SideBlob => 0.16,
            Renderer::LegStripe => 0.24,
            Renderer::FootDots => 0.06,
            Renderer::RareMark => 0.07,
            Renderer::TorsoColor | Renderer::GlobalTint => 0.0,
        }
    }
}

impl FromStr for Renderer {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Renderer::ALL
            .into_iter()
            .find(|r| r.id() == s)
            .ok_or_else(|| format!("unknown renderer `{s}`"))
    }
}

impl FromStr for AttributeKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "localizable" => Ok(AttributeKind::Localizable),
            "global" => Ok(AttributeKind::Global),
            _ => Err(format!("unknown attribute kind `{s}`")),
        }
    }
}

impl std::fmt::Display for AttributeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AttributeKind::Localizable => "localizable",
            AttributeKind::Global => "global",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttributeSpec {
    pub name: String,
    pub kind: AttributeKind,
    pub renderer: Renderer,
    /// Probability that a sample carries the attribute, in `(0, 1]`.
    pub rate: f64,
    pub k: usize,
    /// Vertical range, as fractions of body height from its top, that the
    /// primitive must stay inside.
    pub band: (f64, f64),
}

impl AttributeSpec {
    pub fn new(name: &str, renderer: Renderer, rate: f64, band: (f64, f64)) -> Self {
        AttributeSpec {
            name: name.into(),
            kind: renderer.kind(),
            renderer,
            rate,
            k: renderer.candidates(),
            band,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |why: String| Err(WpalError::InvalidConfig(format!("attribute `{}`: {why}", self.name)));
        if self.name.is_empty() || self.name.contains([',', '\n']) {
            return bad("name must be non-empty without commas".into());
        }
        if !(self.rate > 0.0 && self.rate <= 1.0) {
            return bad(format!("rate {} outside (0, 1]", self.rate));
        }
        if self.kind != self.renderer.kind() {
            return bad(format!("renderer {} is {}, not {}", self.renderer.id(), self.renderer.kind(), self.kind));
        }
        if self.k != self.renderer.candidates() {
            return bad(format!("renderer {} plants {} centres, k = {}", self.renderer.id(), self.renderer.candidates(), self.k));
        }
        let (lo, hi) = self.band;
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return bad(format!("band [{lo}, {hi}] is not inside [0, 1]"));
        }
        if hi - lo < self.renderer.extent() {
            return bad(format!(
                "band [{lo}, {hi}] is narrower than the {} primitive ({})",
                self.renderer.id(),
                self.renderer.extent()
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttributeSchema {
    pub attributes: Vec<AttributeSpec>,
}

impl Default for AttributeSchema {
    /// Eight attributes: two fine-scale head items, two large items with
    /// vertical jitter, two global appearance changes, one rare mark and
    /// one paired item.
    fn default() -> Self {
        AttributeSchema {
            attributes: vec![
                AttributeSpec::new("hat", Renderer::HeadBlob, 0.35, (0.0, 0.12)),
                AttributeSpec::new("glasses", Renderer::HeadBar, 0.35, (0.05, 0.13)),
                AttributeSpec::new("bag", Renderer::SideBlob, 0.4, (0.25, 0.75)),
                AttributeSpec::new("tights", Renderer::LegStripe, 0.3, (0.55, 0.95)),
                AttributeSpec::new("dark-clothing", Renderer::GlobalTint, 0.4, (0.0, 1.0)),
                AttributeSpec::new("red-upper", Renderer::TorsoColor, 0.4, (0.15, 0.55)),
                AttributeSpec::new("v-neck", Renderer::RareMark, 0.05, (0.14, 0.23)),
                AttributeSpec::new("shoes", Renderer::FootDots, 0.5, (0.93, 1.0)),
            ],
        }
    }
}

impl AttributeSchema {
    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.attributes.iter().map(|a| a.name.clone()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    pub fn validate(&self) -> Result<()> {
        if self.attributes.is_empty() {
            return Err(WpalError::InvalidConfig("schema has no attributes".into()));
        }
        for (i, a) in self.attributes.iter().enumerate() {
            a.validate()?;
            if self.attributes[..i].iter().any(|b| b.name == a.name) {
                return Err(WpalError::InvalidConfig(format!("duplicate attribute name `{}`", a.name)));
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("attributes = {}\n", self.attributes.len());
        for (i, a) in self.attributes.iter().enumerate() {
            writeln!(s, "attribute.{i}.name = {}", a.name).unwrap();
            writeln!(s, "attribute.{i}.kind = {}", a.kind).unwrap();
            writeln!(s, "attribute.{i}.renderer = {}", a.renderer.id()).unwrap();
            writeln!(s, "attribute.{i}.rate = {}", a.rate).unwrap();
            writeln!(s, "attribute.{i}.k = {}", a.k).unwrap();
            writeln!(s, "attribute.{i}.band = {}, {}", a.band.0, a.band.1).unwrap();
        }
        s
    }

    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let n: usize = kv.require("attributes")?;
        kv.check_known(|k| {
            k == "attributes"
                || k.strip_prefix("attribute.").is_some_and(|rest| {
                    rest.split_once('.').is_some_and(|(i, field)| {
                        i.parse::<usize>().is_ok_and(|i| i < n)
                            && matches!(field, "name" | "kind" | "renderer" | "rate" | "k" | "band")
                    })
                })
        })?;
        let mut attributes = Vec::with_capacity(n);
        for i in 0..n {
            let key = |f: &str| format!("attribute.{i}.{f}");
            let renderer: Renderer = kv.require(&key("renderer"))?;
            let band: Vec<f64> = kv
                .list(&key("band"))?
                .ok_or_else(|| WpalError::InvalidConfig(format!("missing `{}`", key("band"))))?;
            if band.len() != 2 {
                return Err(WpalError::InvalidConfig(format!("`{}` needs two values", key("band"))));
            }
            attributes.push(AttributeSpec {
                name: kv.require(&key("name"))?,
                kind: kv.parsed_or(&key("kind"), renderer.kind())?,
                renderer,
                rate: kv.require(&key("rate"))?,
                k: kv.parsed_or(&key("k"), renderer.candidates())?,
                band: (band[0], band[1]),
            });
        }
        let schema = AttributeSchema { attributes };
        schema.validate()?;
        Ok(schema)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_kv(&KeyValues::parse(text, "<schema>")?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_kv(&KeyValues::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schema_is_valid() {
        let s = AttributeSchema::default();
        s.validate().unwrap();
        assert_eq!(s.len(), 8);
        assert_eq!(s.attributes.iter().filter(|a| a.kind == AttributeKind::Global).count(), 2);
        assert_eq!(s.attributes.iter().filter(|a| a.k == 2).count(), 1);
        assert!(s.attributes.iter().any(|a| a.rate == 0.05));
    }

    #[test]
    fn text_round_trip() {
        let s = AttributeSchema::default();
        assert_eq!(AttributeSchema::parse(&s.to_text()).unwrap(), s);
    }

    #[test]
    fn narrow_band_rejected() {
        let mut s = AttributeSchema::default();
        s.attributes[0].band = (0.0, 0.05);
        let err = s.validate().unwrap_err().to_string();
        assert!(err.contains("narrower"), "{err}");
    }

    #[test]
    fn bad_rates_and_kinds_rejected() {
        let mut s = AttributeSchema::default();
        s.attributes[1].rate = 0.0;
        assert!(s.validate().is_err());
        let mut s = AttributeSchema::default();
        s.attributes[1].rate = 1.0;
        s.validate().unwrap();
        s.attributes[7].k = 1;
        assert!(s.validate().is_err());
        let mut s = AttributeSchema::default();
        s.attributes[4].kind = AttributeKind::Localizable;
        assert!(s.validate().is_err());
    }
}
