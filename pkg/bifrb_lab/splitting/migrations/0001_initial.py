# Generated by Django 5.2.8 on 2026-10-17 09:12

from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='SolverRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('updated_at', models.DateTimeField(auto_now=True)),
                ('run_id', models.CharField(max_length=40, unique=True)),
                ('instance_name', models.CharField(max_length=80)),
                ('plan_mode', models.CharField(max_length=20)),
                ('corollary_tag', models.CharField(blank=True, max_length=20)),
                ('certified', models.BooleanField(default=True)),
                ('status', models.CharField(choices=[('converged', 'Converged'), ('max_iters', 'Max iterations'), ('certification_failed', 'Certification failed')], max_length=30)),
                ('exit_code', models.PositiveSmallIntegerField(default=0)),
                ('iterations', models.PositiveIntegerField(default=0)),
                ('final_phi', models.FloatField(blank=True, null=True)),
                ('final_merit', models.FloatField(blank=True, null=True)),
                ('final_residual', models.FloatField(blank=True, null=True)),
                ('trace_path', models.CharField(blank=True, max_length=500)),
                ('manifest', models.JSONField(blank=True, default=dict)),
            ],
            options={
                'ordering': ['-created_at'],
            },
        ),
    ]
