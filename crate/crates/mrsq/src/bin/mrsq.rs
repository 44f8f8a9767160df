fn main() {
    println!("mrsq");
}
