#include <cstdio>
int main() { std::puts("[pass] placeholder"); return 0; }
