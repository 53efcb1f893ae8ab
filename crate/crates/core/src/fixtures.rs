//! Shared test contexts.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::context::Context;
use crate::dsl::{parse_literal, parse_programs, Equivalence, Literal, ParamType, ProbeSet, Scope, Value};
use crate::ops::{AbstractionName, OperationTable, VariantStep};

fn lit(s: &str) -> Value {
    parse_literal(s).unwrap().to_value()
}

fn cross(partner: &str, name: Option<&str>) -> VariantStep {
    VariantStep::Crossover { partner: partner.to_string(), slot: None, name: name.map(ToString::to_string) }
}

fn context(src: &str, operations: OperationTable, equivalence: Equivalence) -> Context {
    let probes = ProbeSet::new()
        .with(ParamType::Pitch, alloc::vec![Value::Int(60)])
        .with(ParamType::Steps, (1..=11).map(Value::Int).collect())
        .with(ParamType::Direction, alloc::vec![lit("up"), lit("down")])
        .with(ParamType::Count, alloc::vec![Value::Int(2)])
        .with(ParamType::Chord, alloc::vec![lit("major")])
        .with(ParamType::Pattern, alloc::vec![lit("[C4, E4]")])
        .with(ParamType::Rhythm, alloc::vec![lit("<1/2, 1>"), lit("<1, 1/4>")])
        .with(ParamType::Latent, (0..20).map(Value::Int).collect());
    let mut ctx = Context::new(Scope::new(parse_programs(src).unwrap()).unwrap(), probes);
    ctx.operations = operations;
    ctx.equivalence = equivalence;
    ctx
}

pub const MELODIC: &str = "
up(n: pitch, steps: steps) = step(up, n, steps)
down(n: pitch, steps: steps) = step(down, n, steps)
move(direction: direction, n: pitch, steps: steps) = step(direction, n, steps)
repeat(pattern: pattern, times: count) = loop(times, pattern)
arpeggio(root: pitch, chord: chord, direction: direction) = orient(direction, chord_tones(root, chord))
";

/// The melodic programs with plain structural equivalence.
pub fn melodic() -> Context {
    let mut table = OperationTable::default();
    table.variants.insert(
        "arpeggio".into(),
        alloc::vec![
            cross("repeat", Some("repeated_arpeggio")),
            VariantStep::Set { param: "direction".into(), value: Literal::Dir(crate::dsl::Direction::Up), name: None },
        ],
    );
    table.abstractions.push(AbstractionName { a: "up".into(), b: "down".into(), name: "move".into(), param: Some("direction".into()) });
    context(MELODIC, table, Equivalence::default())
}

fn style_melodies() -> Vec<String> {
    let names = ["C", "D", "E", "F", "G", "A", "B"];
    (0..20).map(|i| alloc::format!("[{}4, {}4]", names[i % 7], names[(i / 7 + i + 1) % 7])).collect()
}

/// The three demonstration libraries' scope and tables: style fragments,
/// rhythmic style fragments and a latent generator with five predictable
/// and fifteen unstable latents.
pub fn s33() -> Context {
    let mut src = String::from(MELODIC);
    src.push_str(
        "
staccato(m: pattern) = stretch(m, 1, 2)
smooth(m: pattern) = stretch(m, 3, 2)
accelerando(m: pattern) = accel(m)
staccato_rhythmic(m: pattern, rhythm: rhythm) = stretch(rhythmize(m, rhythm), 1, 2)
smooth_rhythmic(m: pattern, rhythm: rhythm) = stretch(rhythmize(m, rhythm), 3, 2)
accelerando_rhythmic(m: pattern, rhythm: rhythm) = accel(rhythmize(m, rhythm))
style_0() = [C4, D4, E4]
style_1() = [E4, D4, C4]
style_2() = [G4, G4, A4]
style_3() = [C4, E4, G4, C4]
style_4() = [F4]
style_alpha() = [D4, F4, A4]
style_beta() = [B4, G4]
",
    );
    src.push_str("neural_gen(latent: latent-id) = pick(latent");
    for m in style_melodies() {
        src.push_str(", ");
        src.push_str(&m);
    }
    src.push_str(")\n");

    let styles = ["staccato", "smooth", "accelerando"];
    let mut table = OperationTable::default();
    for p in ["up", "down", "repeat"] {
        table.variants.insert(p.into(), styles.iter().map(|s| cross(s, None)).collect());
    }
    let mut mv: Vec<VariantStep> = styles.iter().map(|s| cross(s, None)).collect();
    mv.extend(styles.iter().map(|s| cross(&alloc::format!("{s}_rhythmic"), None)));
    table.variants.insert("move".into(), mv);
    table.variants.insert(
        "neural_gen".into(),
        (0..20)
            .map(|k| VariantStep::Stochastic {
                outcomes: if k < 5 {
                    alloc::vec![(alloc::format!("style_{k}"), 1.0)]
                } else {
                    alloc::vec![("style_alpha".into(), 0.5), ("style_beta".into(), 0.5)]
                },
            })
            .collect(),
    );
    context(&src, table, Equivalence { fold_octave: true, unordered: true })
}
