fn main() {
    println!("tada");
}
