fn main() {
    println!("overlinkd");
}
