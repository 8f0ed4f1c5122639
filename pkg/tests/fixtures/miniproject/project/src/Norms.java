class Norms {

    static double accumulate(double[] values) {
        double total = 0.0;
        for (int i = 0; i < values.length; i++) {
            total += Math.abs(values[i]);
        }
        return total;
    }
}
