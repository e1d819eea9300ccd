//! crate doc
fn f<'a>(x: &'a str) -> &'a str { x } // lifetime
let s = "multi
line // kept";
/* outer /* inner */ rest */
