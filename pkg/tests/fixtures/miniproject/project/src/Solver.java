class Solver {

    int iterations;

    void configure(int maxIterations) {
        iterations = maxIterations;
    }

    double step(double current, double gradient) {
        return current - 0.1 * gradient;
    }
}
