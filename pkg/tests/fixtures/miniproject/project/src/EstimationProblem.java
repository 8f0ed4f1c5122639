class EstimationProblem {

    double[] allParameters;
    double[] unboundParameters;

    double[] getAllParameters() {
        return allParameters;
    }

    double[] getUnboundParameters() {
        return unboundParameters;
    }

    int countUnbound() {
        return unboundParameters.length;
    }
}
