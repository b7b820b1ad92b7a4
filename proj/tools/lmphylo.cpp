#include "lmphylo/lmphylo.hpp"
int main() { return 0; }
