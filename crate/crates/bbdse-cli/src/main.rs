fn main() {
    // Placeholder until the command surface lands.
}
