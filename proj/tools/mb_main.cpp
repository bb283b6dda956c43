#include <cstdio>
int main() { std::puts("mb: placeholder"); return 0; }
