fn main() {
    // placeholder until the engine library lands
}
