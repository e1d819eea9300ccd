fn main() {
    println!("{}", "/* str */"); // c
}
/* unterminated
