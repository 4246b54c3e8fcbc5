# classify a number
n = int(input())
if n < 0:
    print("negative")
elif n == 0:
    print("zero")
else:
    print("positive")

label = "even" if n % 2 == 0 else "odd"
print(label)
