#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <cstdlib>

int main(int argc, char** argv) {
  // The CLI tests set the seed variable themselves; an inherited one would
  // change their expected config hashes.
  ::unsetenv("WLFORGE_SEED");
  doctest::Context ctx(argc, argv);
  return ctx.run();
}
