//! Inspecting the builtin agent prompts and rendering one.
//!
//! `cargo run --example prompt_render`

use std::collections::BTreeMap;

use nl2opt::agents::{PromptTemplate, Templates};

pub fn run() -> anyhow::Result<String> {
    let mut out = String::new();
    for t in Templates::builtin().all() {
        out += &format!("{}: {:?}\n", t.name, t.placeholders());
    }

    // doubled braces are literal, so JSON examples survive rendering
    let t = PromptTemplate::new("demo", "You formulate models.", "Problem: {problem}\nReply as {{\"OBJECTIVE\": ...}}")?;
    let rendered = t.render(&BTreeMap::from([("problem", "Maximize x subject to x <= 4. {not a slot}".to_owned())]))?;
    out += &format!("\n{rendered}\n");
    match t.render(&BTreeMap::new()) {
        Err(e) => out += &format!("{e}\n"),
        Ok(_) => anyhow::bail!("an unbound placeholder should fail"),
    }
    Ok(out)
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    print!("{}", run()?);
    Ok(())
}
