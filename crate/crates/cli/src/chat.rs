use std::fmt::Write as _;
use std::io::{self, BufRead, Write};
use std::path::PathBuf;

use anyhow::Result;
use teachbot::model::{
    api_dispatch, entity_output, ApiRegistry, DialogState, DomainSchema, Lexicon, Model, TemplateCatalog, TurnOutcome,
};
use teachbot::nlr::{load_rules, RuleBook, RuleSet};
use teachbot::train::Variant;

use crate::commands::{load_checkpoint, read_rules, rules_for};
use crate::ChatArgs;

/// Live REPL state: model, rules, catalog and the current dialog.
pub struct ChatSession {
    model: Model<f64>,
    variant: Variant,
    rules_path: Option<PathBuf>,
    rules: RuleBook,
    catalog: TemplateCatalog,
    lexicon: Lexicon,
    registry: ApiRegistry<f64>,
    state: DialogState<f64>,
    debug: bool,
    pub transcript: Vec<String>,
}

pub enum Reply {
    Text(String),
    Quit,
}

impl ChatSession {
    pub fn new(
        model: Model<f64>,
        variant: Variant,
        rules_path: Option<PathBuf>,
        catalog: TemplateCatalog,
        schema: &DomainSchema,
        debug: bool,
    ) -> Result<Self> {
        let rules = read_rules(rules_path.as_deref())?;
        let registry = ApiRegistry::with_stubs(&catalog);
        let state = model.initial_state();
        Ok(Self {
            model,
            variant,
            rules_path,
            rules,
            catalog,
            lexicon: schema.lexicon(),
            registry,
            state,
            debug,
            transcript: Vec::new(),
        })
    }

    #[cfg(test)]
    pub fn state(&self) -> &DialogState<f64> {
        &self.state
    }

    pub fn handle(&mut self, line: &str) -> Result<Reply> {
        let line = line.trim();
        match line {
            "/quit" | "/exit" => return Ok(Reply::Quit),
            "/reset" => {
                self.state.reset();
                self.transcript.push("-- reset --".into());
                return Ok(Reply::Text("(dialog reset)".into()));
            }
            "/rules" => return Ok(Reply::Text(self.reload_rules())),
            _ => {}
        }
        self.transcript.push(format!("user: {line}"));
        let candidates: Vec<usize> = (0..self.catalog.len()).collect();
        let active = rules_for(self.variant, &self.rules);
        let out = self.model.turn_forward(&mut self.state, line, &self.lexicon, &candidates, &self.catalog, active)?;
        let template = self.catalog.get(out.selected).expect("selected id in catalog").clone();
        if let Err(e) = api_dispatch(&template, &mut self.state, &self.registry, self.model.config.api_dim) {
            log::warn!("{e}");
        }
        let reply = entity_output(&template.text, &self.state.entities);
        self.transcript.push(format!("bot: {reply}"));
        let mut text = reply;
        if self.debug {
            text.push('\n');
            text.push_str(&self.debug_pane(&out));
        }
        Ok(Reply::Text(text))
    }

    fn reload_rules(&mut self) -> String {
        let Some(path) = &self.rules_path else {
            return "no rule file to reload".into();
        };
        match load_rules(path) {
            Ok(r) => {
                self.rules = r;
                format!("reloaded {} rules ({} s, {} u)", self.rules.len(), self.rules.s_rules.len(), self.rules.u_rules.len())
            }
            Err(e) => format!("rule reload failed, keeping previous rules: {e}"),
        }
    }

    fn debug_pane(&self, out: &TurnOutcome<f64>) -> String {
        let mut s = String::new();
        let mut order: Vec<usize> = (0..out.distribution.len()).collect();
        order.sort_by(|&a, &b| out.distribution[b].total_cmp(&out.distribution[a]).then(a.cmp(&b)));
        let _ = writeln!(s, "  input: {}", out.user_text_delex);
        for &i in order.iter().take(5) {
            let id = out.candidates[i];
            let _ = writeln!(s, "  p={:.4}  [{id}] {}", out.distribution[i], self.catalog.text(id));
        }
        let sets = [("s", &self.rules.s_rules, &out.nlr.mu_s, &out.nlr.alpha_s), ("u", &self.rules.u_rules, &out.nlr.mu_u, &out.nlr.alpha_u)];
        for (name, set, mu, alpha) in sets {
            let (Some(mu), Some(alpha)) = (mu, alpha) else {
                let _ = writeln!(s, "  {name}-rules: disabled");
                continue;
            };
            let _ = writeln!(s, "  {name}-rules: α mass {:.4}", alpha.iter().sum::<f64>());
            write_firing(&mut s, name, set, mu);
        }
        s.trim_end().to_string()
    }
}

fn write_firing(s: &mut String, name: &str, set: &RuleSet, mu: &[f64]) {
    let mut order: Vec<usize> = (0..mu.len()).collect();
    order.sort_by(|&a, &b| mu[b].total_cmp(&mu[a]).then(a.cmp(&b)));
    for &i in order.iter().take(3) {
        match set.rules.get(i) {
            Some(r) => {
                let _ = writeln!(s, "    μ={:.4}  {name}[{i}] {:?} -> {:?}", mu[i], r.pre, r.post);
            }
            None => {
                let _ = writeln!(s, "    μ={:.4}  no match", mu[i]);
            }
        }
    }
}

pub fn run(a: ChatArgs) -> Result<()> {
    let ds_dir = &a.data_dir;
    let catalog = TemplateCatalog::load(&ds_dir.join("catalog.json"))?;
    let schema = DomainSchema::load(&ds_dir.join("schema.json"))?;
    let (model, cfg) = load_checkpoint(&a.checkpoint, &catalog)?;
    let variant = a.variant.unwrap_or(cfg.variant);
    let rules_path = a.rules.or(cfg.rules);
    if variant.needs_rules() && rules_path.is_none() {
        return Err(crate::commands::validation(format!("variant {variant} needs --rules")));
    }
    let mut chat = ChatSession::new(model, variant, rules_path, catalog, &schema, a.debug)?;
    let stdin = io::stdin();
    let mut stdout = io::stdout();
    println!("teachbot chat ({variant}); /reset, /rules, /quit");
    loop {
        print!("> ");
        stdout.flush()?;
        let mut line = String::new();
        if stdin.lock().read_line(&mut line)? == 0 {
            break;
        }
        if line.trim().is_empty() {
            continue;
        }
        match chat.handle(&line) {
            Ok(Reply::Text(t)) => println!("{t}"),
            Ok(Reply::Quit) => break,
            Err(e) => println!("error: {e:#}"),
        }
    }
    Ok(())
}
