fn main() {
    println!("kp");
}
