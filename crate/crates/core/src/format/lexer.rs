use super::ParseError;

#[derive(Clone, Debug, PartialEq)]
pub enum Tok {
    Ident(String),
    Number(String),
    Sym(char),
    Eof,
}

#[derive(Clone, Debug)]
pub struct Token {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

pub fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    let bump = |i: &mut usize, col: &mut usize| {
        *i += 1;
        *col += 1;
    };
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            bump(&mut i, &mut col);
            continue;
        }
        if c == '#' || (c == '/' && chars.get(i + 1) == Some(&'/')) {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let (l0, c0) = (line, col);
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                bump(&mut i, &mut col);
            }
            out.push(Token { tok: Tok::Ident(chars[start..i].iter().collect()), line: l0, col: c0 });
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                bump(&mut i, &mut col);
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let save = (i, col);
                bump(&mut i, &mut col);
                if i < chars.len() && (chars[i] == '+' || chars[i] == '-') {
                    bump(&mut i, &mut col);
                }
                if i < chars.len() && chars[i].is_ascii_digit() {
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        bump(&mut i, &mut col);
                    }
                } else {
                    (i, col) = save;
                }
            }
            out.push(Token { tok: Tok::Number(chars[start..i].iter().collect()), line: l0, col: c0 });
            continue;
        }
        if "+-*/^()'=;,{}:[]".contains(c) {
            out.push(Token { tok: Tok::Sym(c), line: l0, col: c0 });
            bump(&mut i, &mut col);
            continue;
        }
        return Err(ParseError { line, col, msg: format!("unexpected character `{}`", c) });
    }
    out.push(Token { tok: Tok::Eof, line, col });
    Ok(out)
}
