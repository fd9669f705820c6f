//! Text and JSON encodings of [`LabeledTree`].
//!
//! Text grammar: `tree := label | label "(" tree ("," tree)* ")"`, where a
//! label is a run of alphanumeric characters or `_`. Whitespace between
//! tokens is ignored. JSON: `{"label": str, "children": [...]}`.

use serde::{Deserialize, Serialize};

use crate::tree::{Label, LabeledTree, NodeId, TreeBuilder, TreeError};

fn syntax(offset: usize, message: impl Into<String>) -> TreeError {
    TreeError::Syntax {
        offset,
        message: message.into(),
    }
}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
}

impl Cursor<'_> {
    fn skip_ws(&mut self) {
        let rest = &self.src[self.pos..];
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn label(&mut self) -> Result<Label, TreeError> {
        let rest = &self.src[self.pos..];
        let len = rest
            .char_indices()
            .find(|&(_, c)| !(c == '_' || c.is_alphanumeric()))
            .map_or(rest.len(), |(i, _)| i);
        if len == 0 {
            return Err(match self.peek() {
                None => syntax(self.pos, "unexpected end of input, expected a label"),
                Some(c) => syntax(self.pos, format!("expected a label, found {c:?}")),
            });
        }
        let label = Label::new(&rest[..len]).expect("scanned label characters");
        self.pos += len;
        Ok(label)
    }
}

pub(crate) fn parse_text(text: &str) -> Result<LabeledTree, TreeError> {
    let mut cur = Cursor { src: text, pos: 0 };
    cur.skip_ws();
    if cur.peek().is_none() {
        return Err(TreeError::Empty);
    }
    let mut builder = TreeBuilder::new();
    let mut open: Vec<NodeId> = Vec::new();
    loop {
        cur.skip_ws();
        let label = cur.label()?;
        let node = match open.last() {
            None => builder.root(label)?,
            Some(&p) => builder.child(p, label)?,
        };
        cur.skip_ws();
        if cur.peek() == Some('(') {
            cur.pos += 1;
            open.push(node);
            continue;
        }
        // A subtree just closed: consume `)` runs until `,` or the end.
        loop {
            cur.skip_ws();
            match (cur.peek(), open.is_empty()) {
                (None, true) => return builder.build(),
                (None, false) => {
                    return Err(syntax(
                        cur.pos,
                        "unexpected end of input, expected ',' or ')'",
                    ))
                }
                (Some(','), false) => {
                    cur.pos += 1;
                    break;
                }
                (Some(')'), false) => {
                    cur.pos += 1;
                    open.pop();
                }
                (Some(c), true) => return Err(syntax(cur.pos, format!("trailing input {c:?}"))),
                (Some(c), false) => {
                    return Err(syntax(cur.pos, format!("expected ',' or ')', found {c:?}")))
                }
            }
        }
    }
}

pub(crate) fn to_text(t: &LabeledTree) -> String {
    enum Step {
        Open(NodeId),
        Text(&'static str),
    }
    let mut out = String::with_capacity(t.len() * 3);
    let mut stack = vec![Step::Open(t.root())];
    while let Some(step) = stack.pop() {
        match step {
            Step::Text(s) => out.push_str(s),
            Step::Open(u) => {
                out.push_str(t.label(u).as_str());
                let kids = t.children(u);
                if kids.is_empty() {
                    continue;
                }
                out.push('(');
                stack.push(Step::Text(")"));
                for (i, &c) in kids.iter().enumerate().rev() {
                    stack.push(Step::Open(c));
                    if i > 0 {
                        stack.push(Step::Text(","));
                    }
                }
            }
        }
    }
    out
}

#[derive(Serialize, Deserialize)]
struct JsonTree {
    label: String,
    #[serde(default)]
    children: Vec<JsonTree>,
}

pub(crate) fn parse_json(input: &str) -> Result<LabeledTree, TreeError> {
    let doc: JsonTree = serde_json::from_str(input).map_err(|e| TreeError::Json(e.to_string()))?;
    let mut builder = TreeBuilder::new();
    let root = builder.root(Label::new(&doc.label)?)?;
    let mut stack = vec![(root, doc.children)];
    while let Some((parent, kids)) = stack.pop() {
        for kid in kids {
            let id = builder.child(parent, Label::new(&kid.label)?)?;
            stack.push((id, kid.children));
        }
    }
    let t = builder.build()?;
    // Ids above come out in an interleaved order; normalize to preorder.
    Ok(t.subtree(t.root()))
}

pub(crate) fn to_json(t: &LabeledTree) -> serde_json::Value {
    fn build(t: &LabeledTree, u: NodeId) -> JsonTree {
        JsonTree {
            label: t.label(u).to_string(),
            children: t.children(u).iter().map(|&c| build(t, c)).collect(),
        }
    }
    serde_json::to_value(build(t, t.root())).expect("plain data")
}
