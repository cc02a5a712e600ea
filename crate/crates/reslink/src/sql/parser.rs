//! Recursive-descent parser for the SELECT subset.
//!
//! Beyond the grammar itself the parser enforces the static rules that do
//! not need a schema: '*' stands alone, source labels and output column
//! names are unique, and with GROUP BY every plain select item appears in
//! the group list. Anything schema-dependent is left to the engine.

use crate::model::SortOrder;

use super::ast::*;
use super::lexer::{tokenize, Keyword, Spanned, Token};
use super::{ParseError, MAX_QUERY_BYTES};

pub fn parse(input: &str) -> Result<QueryAst, ParseError> {
    if input.len() > MAX_QUERY_BYTES {
        return Err(ParseError::syntax(
            MAX_QUERY_BYTES,
            format!("query exceeds the {MAX_QUERY_BYTES} byte limit"),
        ));
    }
    let tokens = tokenize(input)?;
    let mut parser = Parser { tokens, pos: 0, end: input.len() };
    parser.statement()
}

struct Parser {
    tokens: Vec<Spanned>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn statement(&mut self) -> Result<QueryAst, ParseError> {
        if !self.eat_keyword(Keyword::Select) {
            return Err(self.unexpected("SELECT"));
        }
        let (select, item_positions) = self.select_list()?;

        self.expect_keyword(Keyword::From)?;
        if matches!(self.peek_token(), Some(Token::LParen)) {
            return Err(ParseError::unsupported(
                self.current_pos(),
                "subqueries are not supported",
            ));
        }
        let mut source_positions = vec![self.current_pos()];
        let from = FromSource::Table(self.table_ref()?);

        let mut joins = Vec::new();
        loop {
            if self.eat_keyword(Keyword::Inner) {
                self.expect_keyword(Keyword::Join)?;
            } else if !self.eat_keyword(Keyword::Join) {
                break;
            }
            source_positions.push(self.current_pos());
            let table = self.table_ref()?;
            self.expect_keyword(Keyword::On)?;
            let on_left = self.column_ref()?;
            self.expect_symbol(&Token::Eq, "'='")?;
            let on_right = self.column_ref()?;
            joins.push(Join { table, on_left, on_right });
        }

        let where_clause = if self.eat_keyword(Keyword::Where) {
            Some(self.condition()?)
        } else {
            None
        };

        let mut group_by = Vec::new();
        if self.eat_keyword(Keyword::Group) {
            self.expect_keyword(Keyword::By)?;
            loop {
                group_by.push(self.column_ref()?);
                if !self.eat_symbol(&Token::Comma) {
                    break;
                }
            }
        }

        let mut order_by = Vec::new();
        if self.eat_keyword(Keyword::Order) {
            self.expect_keyword(Keyword::By)?;
            loop {
                let column = self.column_ref()?;
                let order = if self.eat_keyword(Keyword::Asc) {
                    SortOrder::Asc
                } else if self.eat_keyword(Keyword::Desc) {
                    SortOrder::Desc
                } else {
                    SortOrder::Asc
                };
                order_by.push(OrderKey { column, order });
                if !self.eat_symbol(&Token::Comma) {
                    break;
                }
            }
        }

        let limit = if self.eat_keyword(Keyword::Limit) {
            Some(self.row_count("LIMIT")?)
        } else {
            None
        };
        let offset = if self.eat_keyword(Keyword::Offset) {
            Some(self.row_count("OFFSET")?)
        } else {
            None
        };

        self.eat_symbol(&Token::Semicolon);
        if self.pos < self.tokens.len() {
            return Err(self.unexpected("end of query"));
        }

        let ast = QueryAst {
            select,
            from,
            joins,
            where_clause,
            group_by,
            order_by,
            limit,
            offset,
        };
        validate(&ast, &item_positions, &source_positions)?;
        Ok(ast)
    }

    fn select_list(&mut self) -> Result<(Vec<SelectItem>, Vec<usize>), ParseError> {
        if matches!(self.peek_token(), Some(Token::Star)) {
            let star_pos = self.current_pos();
            self.pos += 1;
            if matches!(self.peek_token(), Some(Token::Comma)) {
                return Err(ParseError::syntax(star_pos, "'*' must be the only select item"));
            }
            return Ok((vec![SelectItem::Star], vec![star_pos]));
        }
        let mut items = Vec::new();
        let mut positions = Vec::new();
        loop {
            positions.push(self.current_pos());
            items.push(self.select_item()?);
            if !self.eat_symbol(&Token::Comma) {
                break;
            }
        }
        Ok((items, positions))
    }

    fn select_item(&mut self) -> Result<SelectItem, ParseError> {
        if let Some(Token::Star) = self.peek_token() {
            return Err(ParseError::syntax(
                self.current_pos(),
                "'*' must be the only select item",
            ));
        }
        if let Some(Token::Keyword(kw)) = self.peek_token() {
            if let Some(func) = AggregateFunc::parse(&kw.name()) {
                self.pos += 1;
                self.expect_symbol(&Token::LParen, "'('")?;
                let arg = if matches!(self.peek_token(), Some(Token::Star)) {
                    if func != AggregateFunc::Count {
                        return Err(ParseError::syntax(
                            self.current_pos(),
                            format!("'*' is only valid inside COUNT, not {}", func.keyword()),
                        ));
                    }
                    self.pos += 1;
                    AggregateArg::Star
                } else {
                    AggregateArg::Column(self.column_ref()?)
                };
                self.expect_symbol(&Token::RParen, "')'")?;
                let alias = self.optional_alias()?;
                return Ok(SelectItem::Aggregate { func, arg, alias });
            }
        }
        let column = self.column_ref()?;
        let alias = self.optional_alias()?;
        Ok(SelectItem::Column { column, alias })
    }

    fn optional_alias(&mut self) -> Result<Option<String>, ParseError> {
        if self.eat_keyword(Keyword::As) {
            Ok(Some(self.expect_ident("an alias")?))
        } else {
            Ok(None)
        }
    }

    /// Table aliases may drop the AS; a bare identifier after a table name
    /// is unambiguous because every following clause starts with a keyword.
    fn table_ref(&mut self) -> Result<TableRef, ParseError> {
        let name = self.expect_ident("a table name")?;
        let alias = if self.eat_keyword(Keyword::As) {
            Some(self.expect_ident("an alias")?)
        } else if let Some(Token::Ident(alias)) = self.peek_token() {
            let alias = alias.clone();
            self.pos += 1;
            Some(alias)
        } else {
            None
        };
        Ok(TableRef { name, alias })
    }

    fn column_ref(&mut self) -> Result<ColumnRef, ParseError> {
        let first = self.expect_ident("a column name")?;
        if self.eat_symbol(&Token::Dot) {
            if matches!(self.peek_token(), Some(Token::Star)) {
                return Err(ParseError::unsupported(
                    self.current_pos(),
                    "qualified '*' is not supported",
                ));
            }
            let column = self.expect_ident("a column name")?;
            Ok(ColumnRef::qualified(first, column))
        } else {
            Ok(ColumnRef::bare(first))
        }
    }

    fn condition(&mut self) -> Result<Expr, ParseError> {
        let mut left = self.and_expr()?;
        while self.eat_keyword(Keyword::Or) {
            let right = self.and_expr()?;
            left = Expr::Or(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn and_expr(&mut self) -> Result<Expr, ParseError> {
        let mut left = self.term()?;
        while self.eat_keyword(Keyword::And) {
            let right = self.term()?;
            left = Expr::And(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        if self.eat_symbol(&Token::LParen) {
            if matches!(self.peek_token(), Some(Token::Keyword(Keyword::Select))) {
                return Err(ParseError::unsupported(
                    self.current_pos(),
                    "subqueries are not supported",
                ));
            }
            let inner = self.condition()?;
            self.expect_symbol(&Token::RParen, "')'")?;
            return Ok(inner);
        }
        let left = self.operand()?;
        let op = self.compare_op()?;
        let right = self.operand()?;
        Ok(Expr::Comparison { left, op, right })
    }

    fn operand(&mut self) -> Result<Operand, ParseError> {
        match self.peek_token() {
            Some(Token::Integer(v)) => {
                let v = *v;
                self.pos += 1;
                Ok(Operand::Literal(Literal::Integer(v)))
            }
            Some(Token::Float(v)) => {
                let v = *v;
                self.pos += 1;
                Ok(Operand::Literal(Literal::Float(v)))
            }
            Some(Token::Str(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(Operand::Literal(Literal::Str(s)))
            }
            Some(Token::Ident(_)) => Ok(Operand::Column(self.column_ref()?)),
            _ => Err(self.unexpected("a column or literal")),
        }
    }

    fn compare_op(&mut self) -> Result<CompareOp, ParseError> {
        let op = match self.peek_token() {
            Some(Token::Eq) => CompareOp::Eq,
            Some(Token::Ne) => CompareOp::Ne,
            Some(Token::Lt) => CompareOp::Lt,
            Some(Token::Le) => CompareOp::Le,
            Some(Token::Gt) => CompareOp::Gt,
            Some(Token::Ge) => CompareOp::Ge,
            _ => return Err(self.unexpected("a comparison operator")),
        };
        self.pos += 1;
        Ok(op)
    }

    fn row_count(&mut self, clause: &str) -> Result<u64, ParseError> {
        match self.peek_token() {
            Some(Token::Integer(v)) => {
                let v = *v;
                let pos = self.current_pos();
                self.pos += 1;
                u64::try_from(v).map_err(|_| {
                    ParseError::syntax(pos, format!("{clause} must be non-negative"))
                })
            }
            _ => Err(self.unexpected("a non-negative integer")),
        }
    }

    fn peek_token(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|sp| &sp.token)
    }

    /// Byte offset of the current token, or end of input once exhausted.
    fn current_pos(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end, |sp| sp.position)
    }

    fn eat_keyword(&mut self, kw: Keyword) -> bool {
        if self.peek_token() == Some(&Token::Keyword(kw)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_keyword(&mut self, kw: Keyword) -> Result<(), ParseError> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            Err(self.unexpected(&kw.name()))
        }
    }

    fn eat_symbol(&mut self, token: &Token) -> bool {
        if self.peek_token() == Some(token) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_symbol(&mut self, token: &Token, what: &str) -> Result<(), ParseError> {
        if self.eat_symbol(token) {
            Ok(())
        } else {
            Err(self.unexpected(what))
        }
    }

    fn expect_ident(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek_token() {
            Some(Token::Ident(name)) => {
                let name = name.clone();
                self.pos += 1;
                Ok(name)
            }
            _ => Err(self.unexpected(what)),
        }
    }

    /// Classifies the offending token so write statements and recognized
    /// SQL outside the subset get their own error kinds.
    fn unexpected(&self, expected: &str) -> ParseError {
        match self.tokens.get(self.pos) {
            None => ParseError::syntax(
                self.end,
                format!("unexpected end of query; expected {expected}"),
            ),
            Some(sp) => match &sp.token {
                Token::Keyword(kw) if kw.is_write_statement() => ParseError::write_rejected(
                    sp.position,
                    format!("{} is not allowed; queries are read-only", kw.name()),
                ),
                Token::Keyword(kw) if kw.is_unsupported() => {
                    ParseError::unsupported(sp.position, format!("{} is not supported", kw.name()))
                }
                other => ParseError::syntax(
                    sp.position,
                    format!("unexpected {}; expected {expected}", other.describe()),
                ),
            },
        }
    }
}

fn validate(
    ast: &QueryAst,
    item_positions: &[usize],
    source_positions: &[usize],
) -> Result<(), ParseError> {
    let mut labels: Vec<&str> = Vec::new();
    for (label, pos) in ast.source_labels().into_iter().zip(source_positions) {
        if labels.contains(&label) {
            return Err(ParseError::syntax(*pos, format!("duplicate table label '{label}'")));
        }
        labels.push(label);
    }

    let mut names: Vec<String> = Vec::new();
    for (item, pos) in ast.select.iter().zip(item_positions) {
        let name = match item {
            SelectItem::Star => continue,
            SelectItem::Column { column, alias } => {
                alias.clone().unwrap_or_else(|| column.column.clone())
            }
            SelectItem::Aggregate { func, alias, .. } => {
                alias.clone().unwrap_or_else(|| func.output_name().to_string())
            }
        };
        if names.contains(&name) {
            return Err(ParseError::syntax(
                *pos,
                format!("duplicate output column '{name}'; use AS to disambiguate"),
            ));
        }
        names.push(name);
    }

    if !ast.group_by.is_empty() {
        for (item, pos) in ast.select.iter().zip(item_positions) {
            match item {
                SelectItem::Star => {
                    return Err(ParseError::syntax(*pos, "'*' cannot be combined with GROUP BY"));
                }
                SelectItem::Column { column, .. } if !ast.group_by.contains(column) => {
                    return Err(ParseError::syntax(
                        *pos,
                        format!("column '{column}' must appear in GROUP BY"),
                    ));
                }
                _ => {}
            }
        }
    } else if ast.has_aggregates() {
        if let Some((_, pos)) = ast
            .select
            .iter()
            .zip(item_positions)
            .find(|(item, _)| !item.is_aggregate())
        {
            return Err(ParseError::syntax(
                *pos,
                "cannot mix aggregates and plain columns without GROUP BY",
            ));
        }
    }
    Ok(())
}
