#include "annbias/experiment.hpp"
int main() { return 0; }
