//! Serde impls. Expressions and melodies travel as canonical DSL text so the
//! JSON stays readable and round-trips exactly.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{parse_melody, parse_program, Library, Melody, ParamType, Program};

impl Serialize for ParamType {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for ParamType {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(D::Error::custom)
    }
}

impl Serialize for Melody {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Melody {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        parse_melody(&s).map_err(D::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct ParamRepr {
    name: String,
    #[serde(rename = "type")]
    ty: ParamType,
}

#[derive(Serialize, Deserialize)]
struct ProgramRepr {
    name: String,
    params: Vec<ParamRepr>,
    body: String,
}

impl Serialize for Program {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        ProgramRepr {
            name: self.name.clone(),
            params: self.params.iter().map(|p| ParamRepr { name: p.name.clone(), ty: p.ty }).collect(),
            body: self.body.to_string(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Program {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = ProgramRepr::deserialize(d)?;
        // Re-parse through the definition grammar so identifier resolution
        // (parameter vs. symbol) matches the declared parameters.
        let mut src = repr.name.clone();
        src.push('(');
        for (i, p) in repr.params.iter().enumerate() {
            if i > 0 {
                src.push_str(", ");
            }
            src.push_str(&p.name);
            src.push_str(": ");
            src.push_str(p.ty.name());
        }
        src.push_str(") = ");
        src.push_str(&repr.body);
        parse_program(&src).map_err(D::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct LibraryRepr {
    programs: Vec<Program>,
    #[serde(default)]
    provenance: BTreeMap<String, u32>,
    #[serde(default)]
    candidate: bool,
}

impl Serialize for Library {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        LibraryRepr { programs: self.programs.clone(), provenance: self.provenance.clone(), candidate: self.candidate }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Library {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = LibraryRepr::deserialize(d)?;
        let mut lib = Library::from_programs(repr.programs).map_err(D::Error::custom)?;
        if let Some(id) = repr.provenance.keys().find(|id| !lib.contains(id)) {
            return Err(D::Error::custom(alloc::format!("provenance for unknown program `{id}`")));
        }
        lib.provenance = repr.provenance;
        lib.candidate = repr.candidate;
        Ok(lib)
    }
}
